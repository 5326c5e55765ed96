#!/usr/bin/env python3
"""Smoke test of the wristarc_py extension module.

Builds nothing itself: run `cargo build -p wristarc-python` (or --release)
first, then `python3 python/smoke_test.py`. The script copies the freshest
built cdylib next to itself under the importable name and drives a miniature
end-to-end pipeline: synthesize sessions, remove drift, segment, label,
extract features, train and evaluate both classifiers, and round-trip a
serialized model.
"""

import math
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load_module():
    candidates = [
        ROOT / "target" / profile / "libwristarc_py.so"
        for profile in ("release", "debug")
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("no built extension found; run `cargo build -p wristarc-python` first")
    freshest = max(built, key=lambda p: p.stat().st_mtime)

    build_dir = Path(__file__).resolve().parent / "_build"
    build_dir.mkdir(exist_ok=True)
    target = build_dir / "wristarc_py.so"
    if not target.exists() or target.stat().st_mtime < freshest.stat().st_mtime:
        shutil.copy2(freshest, target)
    sys.path.insert(0, str(build_dir))
    import wristarc_py

    print(f"[smoke] loaded wristarc_py {wristarc_py.__version__} from {freshest}")
    return wristarc_py


def check(name, condition):
    if not condition:
        sys.exit(f"[smoke] {name}: FAIL")
    print(f"[smoke] {name}: ok")


def main():
    wa = load_module()

    # Constants and vocabulary.
    names = wa.channels()
    check("channel vocabulary", len(names) == wa.NUM_CHANNELS and names[0] == "acc_x")
    check("feature names", len(wa.feature_names()) == 4 * wa.NUM_CHANNELS)

    # One paced session with ground truth: 12 planted target events.
    session, events = wa.synth_session(scenario="L1", seed=7, subject_id="H01")
    check("planted events", len(events) == 12)
    check(
        "label tracks",
        len(session.labels("right")) > 0 and session.left.subject_id == "H01",
    )

    # Drift removal then rest segmentation recovers the planted pulses. The
    # synthetic rests are 5 s, so a wide high-pass window and a threshold
    # above the noise floor separate all of them.
    clean = wa.remove_drift(session, highpass_window_s=20.0)
    rate = clean.right.sample_rate_hz
    tolerance = int(0.25 * rate)
    for wrist in ("left", "right"):
        rec = clean.right if wrist == "right" else clean.left
        segments = wa.segment_by_rest(
            rec, energy_threshold=0.2, energy_window_s=0.75
        )
        truth = [e for e in events if e.slot == "both" or
                 (e.slot == "dominant") == (wrist == "right")]
        check(f"{wrist} segment count", len(segments) == len(truth) == 8)
        for seg in segments:
            match = [
                e for e in truth
                if abs(e.start - seg.start) <= tolerance
                and abs(e.end - seg.end) <= tolerance
            ]
            check(f"{wrist} segment [{seg.start}, {seg.end})", len(match) == 1)
            labeled = wa.target_label(clean, wrist, seg.start, seg.end)
            check(f"{wrist} label at {seg.start}", labeled == match[0].class_)

    # Gesture spotting narrows a segment around its acceleration peak.
    seg = wa.segment_by_rest(clean.right, energy_threshold=0.2, energy_window_s=0.75)[0]
    spot = wa.spot_gesture(clean.right, seg, margin_before_s=0.25, margin_after_s=0.25)
    check(
        "spot narrows",
        len(spot) <= 2 * tolerance + 1 and seg.start <= spot.start < spot.end <= seg.end,
    )

    # Unconstrained sessions tile into floor(T / W) windows.
    l2, _ = wa.synth_session(scenario="L2", seed=3)
    windows = wa.sliding_windows(l2.right, window_s=3.0)
    check("window tiling", len(windows) == len(l2.right) // 300)

    # Features: 4 statistics per channel.
    feats = wa.extract_features(clean.right, seg.start, seg.end)
    check("feature vector", len(feats) == 48 and all(math.isfinite(v) for v in feats))

    # A small labeled corpus: 6 subjects, one paced session each.
    sessions = []
    for i in range(6):
        s, _ = wa.synth_session(scenario="L1", seed=100 + i, subject_id=f"H{i + 1:02}")
        sessions.append(wa.remove_drift(s, highpass_window_s=20.0))
    dataset = wa.build_dataset(
        sessions, segmentation="action", energy_threshold=0.2, energy_window_s=0.75
    )
    check("dataset assembly", len(dataset) == 96 and dataset.classes() == ["M1", "M2", "M3", "M4"])

    # SVM cell: near-perfect on clean synthetic pulses, and deterministic.
    svm = wa.run_cell(dataset, classifier="svm", seed=5)
    check("svm accuracy", svm.accuracy >= 0.9 and svm.n_test == 16)
    again = wa.run_cell(dataset, classifier="svm", seed=5)
    check(
        "svm determinism",
        again.accuracy == svm.accuracy and again.confusion == svm.confusion,
    )

    # Serialized model round-trips and predicts identically.
    model = svm.model
    text = model.serialize()
    reread = wa.parse_svm_model(text)
    window = dataset.window(0)
    check("svm round trip", reread.predict(window) == model.predict(window))

    # CNN cell: a tiny architecture for speed; probabilities must normalize.
    cnn = wa.run_cell(
        dataset,
        classifier="cnn",
        seed=5,
        temporal_filters=4,
        depth_multiplier=1,
        separable_filters=4,
        temporal_kernel=25,
        separable_kernel=8,
        epochs=2,
        batch_size=16,
        patience=0,
    )
    check("cnn runs", cnn.n_test == 16 and len(cnn.training_log) == 2)
    _, probs = cnn.model.predict(window)
    check("cnn probabilities", abs(sum(probs) - 1.0) < 1e-9)

    print("[smoke] all checks passed")


if __name__ == "__main__":
    main()
