import json

import numpy as np
import pytest


def write_triple(dir_path, classes, sample_ids, values, labels, meta_rows):
    """Write a predictions/labels/manifest file triple; returns the paths."""
    pred = dir_path / "predictions.csv"
    lab = dir_path / "labels.csv"
    man = dir_path / "manifest.json"
    header = "sample_id," + ",".join(classes)
    with open(pred, "w", newline="") as fh:
        fh.write(header + "\n")
        for sid, row in zip(sample_ids, values):
            fh.write(sid + "," + ",".join(repr(float(v)) for v in row) + "\n")
    with open(lab, "w", newline="") as fh:
        fh.write(header + "\n")
        for sid, row in zip(sample_ids, labels):
            fh.write(sid + "," + ",".join(str(int(v)) for v in row) + "\n")
    with open(man, "w") as fh:
        json.dump(meta_rows, fh)
    return str(pred), str(lab), str(man)


def simple_meta(sample_ids, dataset_id="ds", duration=5.0):
    return [
        {
            "sample_id": sid,
            "dataset_id": dataset_id,
            "start_s": i * duration,
            "duration_s": duration,
        }
        for i, sid in enumerate(sample_ids)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
