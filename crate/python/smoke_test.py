"""Smoke test for the `teleop` extension module.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml`, or copy
`target/debug/libteleop.so` to `teleop.so` on PYTHONPATH.
"""

import json
import math
import os
import sys
import tempfile

import teleop


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    scene = teleop.Scene.benchmark(seed=3)
    check(scene.num_objects == 4, "benchmark scene has four objects")
    check(teleop.Scene.from_toml(scene.to_toml()).poses() == scene.poses(), "scene TOML round trip")

    pts = scene.model_points(0)
    gt = scene.poses()[0]
    check(teleop.add_s(pts, gt, gt) == 0.0, "ADD-S of identical poses is zero")
    check(abs(teleop.auc([0.05] * 10) - 0.5) < 1e-3, "AUC of constant 5 cm error is 0.5")

    obs = dict(scene.render(seed=1))
    mask = scene.mask_pose(obs[0])
    mesh, _, _ = scene.mesh_pose(0, obs[0])
    e_mask = teleop.add_s(pts, gt, mask)
    e_mesh = teleop.add_s(pts, gt, mesh)
    check(e_mesh < e_mask, f"mesh ADD-S {e_mesh:.4f} < mask ADD-S {e_mask:.4f}")

    tracker = teleop.Tracker(scene, 0, mesh, num_particles=100, seed=0)
    for i in range(5):
        est = tracker.step(dict(scene.render(seed=100 + i))[0])
    check(teleop.add_s(pts, gt, est) < 0.01, "tracker stays within 1 cm")

    gate = teleop.Gate()
    commits = [s for s in (gate.observe(1, "top") for _ in range(400)) if s is not None]
    check(commits == [380], "gate commits at step 380")

    desk = teleop.Scene.desk()
    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "train.jsonl")
        check(teleop.generate_dataset(desk, 60, data, seed=1) == 60, "dataset generated")
        model = teleop.Model.train(data, epochs=3, seed=0)
        path = os.path.join(tmp, "intent.model")
        model.save(path)
        again = teleop.Model.load(path)
        feats = teleop.extract_features([0, 0, 0.25], [0, 1, 0], [0, 1, 0], 0.0, desk.positions())
        check(model.forward(feats) == again.forward(feats), "model file round trip")
        probs, _ = model.forward(feats)
        check(math.isclose(sum(probs), 1.0), "object probabilities sum to one")

        rows = teleop.run_experiment(desk, model, episodes=2, users=["normal"])
        check({r["mode"] for r in rows} == {"early", "late"}, "experiment rows for both modes")

        session = teleop.Session(desk, model)
        check(json.loads(session.greeting())["kind"] == "scene", "session greeting")
        reply = session.handle_line(json.dumps({"kind": "reset"}))
        check(json.loads(reply[0])["kind"] == "reset", "session reset")


if __name__ == "__main__":
    main()
