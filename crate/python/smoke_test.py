#!/usr/bin/env python3
"""Smoke test for the psychstate Python extension module.

Builds nothing itself: run `cargo build -p psychstate-py --release` (or a
debug build) first. The script locates the compiled cdylib, exposes it as
`psychstate`, and exercises the main types and operations end to end.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / "release" / "libpsychstate_py.so",
        REPO / "target" / "debug" / "libpsychstate_py.so",
        REPO / "target" / "release" / "libpsychstate_py.dylib",
        REPO / "target" / "debug" / "libpsychstate_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("cdylib not found; run: cargo build -p psychstate-py --release")
    staging = Path(tempfile.mkdtemp(prefix="psychstate_py_"))
    suffix = ".so" if built.suffix == ".so" else ".so"
    shutil.copy2(built, staging / f"psychstate{suffix}")
    sys.path.insert(0, str(staging))
    import psychstate

    return psychstate


def main():
    ps = load_module()

    # text pipeline
    assert ps.strip_markup("I <b>hate</b> loops") == "I hate loops"
    assert ps.tokenize("While-loops confuse me!") == ["while", "loops", "confuse", "me"]
    assert ps.stem("looping") == "loop"
    assert ps.preprocess("I was <i>looping</i> over arrays!") == ["loop", "arrai"]

    # prosody
    sr = 16000
    frame = [0.8 * math.sin(2 * math.pi * 220.0 * i / sr) for i in range(400)]
    pitch = ps.estimate_pitch(frame, sr)
    assert abs(pitch - 220.0) <= 2.0, pitch
    assert abs(ps.intensity([1.0] * 100)) < 1e-9
    coeffs = ps.mfcc(frame, sr)
    assert len(coeffs) == 13

    # metrics
    cm = [[4, 1, 0], [1, 4, 0], [0, 0, 0]]
    assert abs(ps.cohen_kappa(cm) - 0.6) < 1e-12
    assert abs(ps.macro_f1(cm) - 1.6 / 3.0) < 1e-12
    assert abs(ps.accuracy(cm) - 0.8) < 1e-12

    # feedback
    assert abs(ps.percent_change(22.4, 18.1) - (-19.196)) < 0.01
    plan = ps.select_intervention([0.1, 0.1, 0.1, 0.9])
    assert plan["category"] == "CognitiveSupport", plan
    assert plan["urgency"] == "High"
    try:
        ps.percent_change(0.0, 1.0)
        raise AssertionError("expected ValueError for pre = 0")
    except ValueError:
        pass

    # corpus
    data = ps.generate_corpus(seed=42)
    assert len(data) == 500
    counts = data.class_counts()
    assert counts["engagement"] == [70, 320, 110]
    assert counts["stress"] == [40, 410, 50]

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "data.jsonl"
        data.save(path)
        back = ps.load_dataset(path)
        assert len(back) == 500

    # knowledge graph
    graph = ps.KnowledgeGraph(seed=42, epochs=60)
    assert graph.triple_count() >= 40
    score = graph.score("loops", "requires", "conditionals")
    assert 0.0 < score < 1.0
    top = graph.top_k("loops", 3, [0.1, 0.8, 0.1, 0.1])
    assert 0 < len(top) <= 3
    prompt = graph.render_prompt("loops", 2, [0.1, 0.8, 0.1, 0.1])
    assert "loops" in prompt.lower() and prompt.endswith(".")
    assert "vocal stress" in prompt  # stress-negative state summary

    # tiny model train + predict
    small = ps.generate_corpus(seed=7, total=80)
    model = ps.Model(small, epochs=2, seed=7, hidden=16, d_text=16)
    assert model.param_count() > 0
    pred = model.predict_text("panic dread and crushing pressure on loops")
    for dim in ("engagement", "stress", "motivation", "understanding"):
        probs = pred[dim]
        assert len(probs) == 3
        assert abs(sum(probs) - 1.0) < 1e-6
    assert len(pred["attention"]) > 0

    with tempfile.TemporaryDirectory() as tmp:
        ck = Path(tmp) / "model.psym"
        model.save(ck)
        loaded = ps.Model.load(ck)
        again = loaded.predict_text("panic dread and crushing pressure on loops")
        assert again["stress"] == pred["stress"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
