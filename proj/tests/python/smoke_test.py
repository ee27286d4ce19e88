"""Smoke tests for the python module: import, tensor I/O, the probability
math, the attention pipeline and a miniature train/evaluate round."""

import math
import shutil
import tempfile
from pathlib import Path

import numpy as np

import mfhi


def check(condition, message):
    if not condition:
        raise AssertionError(message)


def test_tensor_roundtrip(workdir):
    rng = np.random.default_rng(0)
    original = rng.normal(size=(3, 4, 5)).astype(np.float32)
    path = str(workdir / "probe.mft")
    mfhi.write_tensor(path, original)
    back = mfhi.read_tensor(path)
    check(back.shape == original.shape, "tensor shape changed in round-trip")
    check(np.array_equal(back, original), "tensor payload changed in round-trip")


def test_dcm_probability():
    p = mfhi.dcm_probability([1.0, 0.0], 0, r=2.0, d=0.0)
    expected = math.exp(2.0) / (math.exp(2.0) + 1.0)
    check(abs(p[0] - expected) < 1e-9, f"dcm probability {p[0]} != {expected}")
    check(abs(sum(p) - 1.0) < 1e-9, "probabilities do not sum to one")
    margined = mfhi.dcm_probability([1.0, 0.0], 0, r=2.0, d=0.3)
    check(margined[0] < p[0], "margin did not reduce the target probability")


def test_visual_feature():
    rng = np.random.default_rng(1)
    feature_map = rng.normal(size=(4, 6, 6)).astype(np.float32)
    zero_w = np.zeros((5, 4), dtype=np.float32)
    zero_b = np.zeros(5, dtype=np.float32)
    out = mfhi.visual_feature(feature_map, zero_w, zero_b, top_d=3)
    # zero classifier: attention vanishes and the feature is plain pooling
    check(np.allclose(out["attention"], 0.0), "zero weights should yield zero attention")
    check(
        np.allclose(out["feature"], feature_map.mean(axis=(1, 2)), atol=1e-6),
        "residual guarantee violated",
    )
    check(np.all((out["scores"] > 0) & (out["scores"] < 1)), "scores must lie in (0,1)")


def test_metrics():
    cmc = mfhi.metric_cmc([[7, 3, 5], [3, 5, 7]], [[7], [7]], [1, 3])
    check(cmc[1] == 0.5 and cmc[3] == 1.0, f"unexpected CMC {cmc}")
    value = mfhi.metric_map([[4, 9, 6]], [[4, 6]])
    check(abs(value - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12, f"unexpected mAP {value}")
    check(mfhi.metric_map([[0, 1]], [[]]) is None, "empty relevance should give None")


def test_pipeline(workdir):
    data = workdir / "data"
    mfhi.generate_synthetic(
        str(data),
        train_identities=10,
        test_identities=4,
        attributes=8,
        channels=8,
        height=4,
        width=4,
        images_per_identity=4,
        seed=5,
    )
    check((data / "manifest.json").exists(), "manifest missing after generation")

    # generation is deterministic
    data_again = workdir / "data_again"
    mfhi.generate_synthetic(
        str(data_again),
        train_identities=10,
        test_identities=4,
        attributes=8,
        channels=8,
        height=4,
        width=4,
        images_per_identity=4,
        seed=5,
    )
    check(
        (data / "manifest.json").read_bytes() == (data_again / "manifest.json").read_bytes(),
        "generation is not deterministic",
    )

    summary = mfhi.train(
        str(data),
        str(workdir / "run"),
        episodes=80,
        identities_per_episode=5,
        shots=2,
        top_d=4,
        seed=0,
    )
    check(summary["episodes"] == 80, "wrong episode count")
    check(summary["last_total"] < summary["first_total"], "training did not reduce the loss")

    report = mfhi.evaluate(summary["checkpoint"], str(data), "i2a")
    check(report["protocol"] == "i2a", "wrong protocol tag")
    for name, value in report["values"].items():
        check(0.0 <= value <= 1.0, f"metric {name}={value} outside [0,1]")
    report_i2i = mfhi.evaluate(summary["checkpoint"], str(data), "i2i")
    check(report_i2i["queries"] > 0, "no I2I queries evaluated")


def main():
    workdir = Path(tempfile.mkdtemp(prefix="mfhi_smoke_"))
    try:
        test_tensor_roundtrip(workdir)
        test_dcm_probability()
        test_visual_feature()
        test_metrics()
        test_pipeline(workdir)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
    print("python smoke tests passed")


if __name__ == "__main__":
    main()
