"""
Plugging in a remote backend
============================

Serve a toy reasoning service on localhost and point an experiment at it.
The service answers counting tasks from the observation it is sent, so it
only knows what the engine shows it. The first view hides back-row objects;
after feedback it is sent the later view and recounts.
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np

from cimr.harness import ExperimentConfig, run_experiment
from cimr.mapsim import COLORS, MATERIALS, SHAPES

# one-hot slot layout: color(5) | shape(3) | material(2) | presence(1)
SLOT_INDEX = {w: i for i, w in enumerate(COLORS + SHAPES + MATERIALS)}
SLOT_INDEX.update({"cubic": SLOT_INDEX["cube"], "spherical": SLOT_INDEX["sphere"],
                   "cylindrical": SLOT_INDEX["cylinder"]})


class ToyService(BaseHTTPRequestHandler):
    def do_POST(self):
        req = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        cells = np.array(req["observation"])
        # "count the number of <word> objects, ..."
        word = req["instruction"].split(" objects")[0].split()[-1]
        value = int(cells[..., SLOT_INDEX[word]].sum())
        body = json.dumps({"response": {"kind": "count", "value": value},
                           "rationale": f"counted {word} in round {req['round']}"})
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body.encode())

    def log_message(self, *args):
        pass


server = HTTPServer(("127.0.0.1", 0), ToyService)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}"

config = ExperimentConfig(episodes=60, task_mix=(("count", 1.0),), backend_url=url)
result = run_experiment(config)
print(result.table.to_csv())
for trace in result.traces["full"][:3]:
    for rec in trace.to_records():
        print(rec["episode"], rec["round"], rec["response"], [f["detail"] for f in rec["feedback"]])
server.shutdown()
