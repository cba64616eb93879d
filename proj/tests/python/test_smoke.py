"""End-to-end smoke checks of the hengnet Python module."""

import json
import math
import os
import pathlib

import pytest

import hengnet

DATA = pathlib.Path(os.environ["HENG_DATA_DIR"])

SAMPLING = {
    "scenario_count": 6,
    "velocity_range_m_s": [1.0, 1.0],
    "velocity_segments": [1, 1],
    "fraction_range": [0.0, 1.0],
    "boundary_segments": [1, 2],
    "initial_family": "constant",
    "queries_per_scenario": 8,
    "split_ratios": [0.7, 0.15, 0.15],
    "seed": 9,
    "cells_per_pipe": 12,
    "horizon_s": 80.0,
    "snapshot_stride": 4,
    "courant": 0.9,
    "sensor_count": 2,
    "boundary_samples": 4,
    "sensor_noise": 0.0,
}

MODEL = {
    "feature_dim": 4,
    "head_dim": 2,
    "embed_dim": 2,
    "rounds": 1,
    "branch_hidden": [8],
    "trunk_hidden": [8],
    "epochs": 3,
    "batch_size": 32,
    "lr": 1e-3,
}


def test_validate_and_hash():
    assert hengnet.validate_network(str(DATA / "reference6.json")) == []
    h = hengnet.topology_hash(str(DATA / "reference6.json"))
    assert len(h) == 16
    int(h, 16)


def test_mix_and_oracle():
    assert hengnet.mix_at_node([(1.0, 0.1), (1.0, 0.7)]) == pytest.approx(0.4)
    assert hengnet.mix_at_node([(1.0, 0.0)], injection=(1.0, 1.0)) == pytest.approx(0.5)
    w = hengnet.characteristics_oracle(
        initial_breaks=[0.0],
        initial_values=[0.2],
        boundary_times=[0.0],
        boundary_fractions=[0.9],
        velocity_times=[0.0],
        velocity_values=[1.0],
        length_m=10.0,
        x_m=5.0,
        t_s=2.0,
    )
    assert w == pytest.approx(0.2)


def test_simulate_bounds():
    result = hengnet.simulate(
        str(DATA / "y_network.json"), str(DATA / "scenario_y_blend.json")
    )
    assert result["times_s"][0] == 0.0
    assert result["csv"].startswith("time_s,pipe_id,cell_index,x_m,fraction\n")
    for snapshots in result["fields"].values():
        for cells in snapshots:
            assert all(0.0 <= w <= 1.0 for w in cells)


def test_dataset_train_eval_query(tmp_path):
    sampling = tmp_path / "sampling.json"
    sampling.write_text(json.dumps(SAMPLING))
    dataset = tmp_path / "dataset.jsonl"
    counts = hengnet.generate_dataset(
        str(DATA / "reference6.json"), str(sampling), str(dataset)
    )
    assert counts["scenarios"] == 6
    assert counts["samples"] == 48
    assert counts["train"] > 0

    model_config = tmp_path / "model.json"
    model_config.write_text(json.dumps(MODEL))
    checkpoint = tmp_path / "model.ckpt.json"
    summary = hengnet.train(str(dataset), str(model_config), str(checkpoint), seed=1)
    assert summary["epochs"] == 3
    assert math.isfinite(summary["final_train_mse"])

    metrics = hengnet.evaluate(str(checkpoint), str(dataset), split="val")
    assert metrics["split"] == "val"
    assert metrics["model_kind"] == "graph"
    assert metrics["rmse"] >= 0.0
    assert metrics["parameter_count"]["total"] == summary["parameter_count"]

    scenario = json.loads(dataset.read_text().splitlines()[1])
    inputs = tmp_path / "inputs.json"
    inputs.write_text(json.dumps(scenario["inputs"]))
    w = hengnet.query(
        str(checkpoint), str(DATA / "reference6.json"), str(inputs),
        pipe="p4", x_m=60.0, t_s=40.0,
    )
    assert 0.0 <= w <= 1.0

    with pytest.raises(ValueError):
        hengnet.query(
            str(checkpoint), str(DATA / "reference6.json"), str(inputs),
            pipe="p9", x_m=60.0, t_s=40.0,
        )
