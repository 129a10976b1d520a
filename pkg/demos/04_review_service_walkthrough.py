"""The review service, driven the way the browser client drives it.

Creates a run through the HTTP API, walks the expert loop (codes -> feedback
-> re-code -> annotate -> merge -> approve -> classify), and reads the
evaluation endpoints. Uses an in-process test client so the walkthrough works
offline; `themekit serve --root <dir>` serves the same API over a socket.

Run:  python demos/04_review_service_walkthrough.py
"""

import json
import shutil
import time
from pathlib import Path

from fastapi.testclient import TestClient

from themekit import dump_dataset, generate_corpus, keyword_map
from themekit.service import create_app

out_dir = Path(__file__).parent / "output"
root = out_dir / "service-root"
if root.exists():
    shutil.rmtree(root)
out_dir.mkdir(exist_ok=True)

corpus_path = out_dir / "service-corpus.jsonl"
corpus_path.write_text(dump_dataset(generate_corpus(16, seed=3)), encoding="utf-8")
script_path = out_dir / "scenario.json"
script_path.write_text(json.dumps({
    "default": {"mode": "keyword-echo", "keywords": keyword_map(), "k": 3},
}), encoding="utf-8")

client = TestClient(create_app(root))


def wait_for_stage(run_id: str) -> None:
    while True:
        active = client.get(f"/api/runs/{run_id}").json()["active_stage"]
        if active is None or active["finished"]:
            if active and active["error"]:
                raise RuntimeError(active["error"])
            return
        time.sleep(0.05)


print("POST /api/runs")
record = client.post("/api/runs", json={
    "name": "walkthrough",
    "dataset_path": str(corpus_path),
    "research_questions": ["What typical kinds of theft does the corpus describe?"],
    "config": {"backend_kind": "scripted", "backend_script": str(script_path), "k": 3},
}).json()
run_id = record["run_id"]
print(f"  created run {run_id} with {record['n_points']} data points")

print("POST /api/runs/.../stages/code")
client.post(f"/api/runs/{run_id}/stages/code", json={"seed": 3})
wait_for_stage(run_id)
codes = client.get(f"/api/runs/{run_id}/codes", params={"limit": 3}).json()
print(f"  round 1 produced {codes['total']} codes; first page:")
for item in codes["items"]:
    print(f"    {item['id']}: {item['code']}")

print("POST /api/runs/.../feedback (with rerun)")
client.post(f"/api/runs/{run_id}/feedback", json={
    "positive": ["modus operandi"], "negative": ["value of stolen goods"],
    "rerun": True, "seed": 3,
})
wait_for_stage(run_id)
round2 = client.get(f"/api/runs/{run_id}/codes", params={"round": 2, "limit": 3}).json()
print("  round 2 codes after feedback:")
for item in round2["items"]:
    print(f"    {item['id']}: {item['code']}")

print("POST /api/runs/.../annotations")
client.post(f"/api/runs/{run_id}/annotations", json={"items": [
    {"data_point_id": "dp-0000", "round": 2, "verdict": "ok"},
    {"data_point_id": "dp-0001", "round": 2, "verdict": "not_how"},
]})
tally = client.get(f"/api/runs/{run_id}/annotations", params={"round": 2}).json()["tally"]
print(f"  tally so far: {tally['counts']}")

print("collate + merge, then try to classify before approval")
client.post(f"/api/runs/{run_id}/stages/collate", json={"round": 2, "seed": 3})
wait_for_stage(run_id)
client.post(f"/api/runs/{run_id}/stages/merge", json={"round": 2})
wait_for_stage(run_id)
blocked = client.post(f"/api/runs/{run_id}/stages/classify", json={"round": 2})
print(f"  classify before approval -> {blocked.status_code} "
      f"{blocked.json()['error']['code']}")

print("POST /api/runs/.../themes/approve, then classify")
client.post(f"/api/runs/{run_id}/themes/approve", json={"round": 2})
client.post(f"/api/runs/{run_id}/stages/classify", json={"round": 2, "k": 3})
wait_for_stage(run_id)

evaluation = client.get(f"/api/runs/{run_id}/evaluation", params={"round": 2, "k": 3}).json()
print(f"  overall R@1 = {evaluation['recall']['overall']['r_at_1']:.2f}, "
      f"R@3 = {evaluation['recall']['overall']['r_at_3']:.2f}")
mapping = client.get(f"/api/runs/{run_id}/mapping", params={"round": 2}).json()
print(f"  mapping flows: {len(mapping['flows'])} edges, e.g. {mapping['flows'][0]}")
print(f"\nrun directory persists at {root / run_id}; restart the service and "
      f"nothing is lost")
