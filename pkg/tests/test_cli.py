import csv
import json

import numpy as np
import pytest

from noisespec.cli import main
from noisespec.report import (
    DataError,
    read_coherence_csv,
    read_records_csv,
    write_coherence_csv,
    write_records_csv,
)
from noisespec.simulator import CoherenceEstimate, MeasurementRecord

BASE = {
    "seed": 11,
    "noise": {
        "offset": 0.0,
        "fluctuators": [{"amplitude": 1.0, "rate": 1.0, "label": "only"}],
    },
    "schedule": {"shots": 300, "spacing": 1.0, "evolution_time": 0.1, "basis": "y"},
    "campaign": [
        {"family": "FE", "time_range": [0.1, 0.3], "divisions": 3, "repetitions": 40},
        {"family": "Hahn", "time_range": [0.2, 0.4], "divisions": 2, "repetitions": 40},
    ],
    "reconstruction": {"max_lag": 10, "tail_window": 0},
    "filters": {
        "sequences": [
            {"family": "FE", "duration": 1.0},
            {"family": "Hahn", "duration": 1.0},
            {"family": "UDD(4)", "duration": 1.0},
        ],
        "frequency": {"count": 20, "min": 0.5, "max": 50.0},
    },
}


def write_config(tmp_path, data, name="run.cfg"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_simulate_outputs(tmp_path):
    cfg = write_config(tmp_path, BASE)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    chain = read_table(out / "shots_long_time.csv")
    assert len(chain) == 300
    assert chain[0]["spec_id"] == "FE@0.1"
    campaign = read_table(out / "shots_campaign.csv")
    assert len(campaign) == 5 * 40
    coherence = read_table(out / "coherence.csv")
    assert len(coherence) == 5
    assert (out / "shots_long_time.csv").read_text().startswith("# master_seed=11\n")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 11
    assert set(manifest["outputs"]) == {
        "shots_long_time.csv",
        "shots_campaign.csv",
        "coherence.csv",
    }
    assert "numpy" in manifest["versions"]


def test_simulate_zero_noise_coherence_is_unity(tmp_path):
    data = json.loads(json.dumps(BASE))
    data["noise"] = {"offset": 0.0, "fluctuators": []}
    del data["schedule"]
    cfg = write_config(tmp_path, data)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    for row in read_table(out / "coherence.csv"):
        assert float(row["coherence"]) == 1.0


def test_simulate_seed_override_and_determinism(tmp_path):
    cfg = write_config(tmp_path, BASE)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    assert main(["simulate", "--config", cfg, "--seed", "99", "--out", str(c)]) == 0
    same = (a / "shots_campaign.csv").read_bytes()
    assert same == (b / "shots_campaign.csv").read_bytes()
    other = (c / "shots_campaign.csv").read_bytes()
    assert same != other
    assert (c / "coherence.csv").read_text().startswith("# master_seed=99\n")


def test_reconstruct_round_trip(tmp_path):
    cfg = write_config(tmp_path, BASE)
    sim, rec = tmp_path / "sim", tmp_path / "rec"
    assert main(["simulate", "--config", cfg, "--out", str(sim)]) == 0
    assert main(["reconstruct", str(sim), "--config", cfg, "--out", str(rec)]) == 0
    long_rows = read_table(rec / "long_time.csv")
    assert len(long_rows) == 10
    assert [int(r["k"]) for r in long_rows] == list(range(1, 11))
    short_rows = read_table(rec / "short_time.csv")
    assert {"u", "C_eta_est", "Q", "reliable"} <= set(short_rows[0])
    meta = json.loads((rec / "metadata.json").read_text())
    assert meta["short_time"]["rcond"] == 1e-6
    assert meta["short_time"]["mode"] == "measured"
    assert meta["short_time"]["rank"] >= 1
    assert (rec / "reconstruction.svg").stat().st_size > 0


def test_reconstruct_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, BASE)
    sim, rec = tmp_path / "sim", tmp_path / "rec"
    main(["simulate", "--config", cfg, "--out", str(sim)])
    assert (
        main(
            [
                "reconstruct", str(sim), "--config", cfg, "--out", str(rec),
                "--rcond", "1e-3", "--quality-ratio", "2.0",
            ]
        )
        == 0
    )
    meta = json.loads((rec / "metadata.json").read_text())
    assert meta["short_time"]["rcond"] == 1e-3
    assert meta["short_time"]["quality_ratio"] == 2.0


def test_reconstruct_analytic_chi_mode(tmp_path):
    cfg = write_config(tmp_path, BASE)
    sim, rec = tmp_path / "sim", tmp_path / "rec"
    main(["simulate", "--config", cfg, "--out", str(sim)])
    assert main(
        ["reconstruct", str(sim), "--config", cfg, "--out", str(rec), "--analytic-chi"]
    ) == 0
    meta = json.loads((rec / "metadata.json").read_text())
    assert meta["short_time"]["mode"] == "analytic"
    assert meta["short_time"]["discarded"] == []


def test_reconstruct_empty_campaign_marker(tmp_path):
    data = json.loads(json.dumps(BASE))
    del data["campaign"]
    cfg = write_config(tmp_path, data)
    sim, rec = tmp_path / "sim", tmp_path / "rec"
    assert main(["simulate", "--config", cfg, "--out", str(sim)]) == 0
    assert main(["reconstruct", str(sim), "--config", cfg, "--out", str(rec)]) == 0
    assert not (rec / "short_time.csv").exists()
    meta = json.loads((rec / "metadata.json").read_text())
    assert meta["short_time"] is None
    assert meta["note"] == "no short-time estimate"


def test_reconstruct_rejects_x_basis_chain(tmp_path):
    data = json.loads(json.dumps(BASE))
    data["schedule"]["basis"] = "x"
    cfg = write_config(tmp_path, data)
    sim = tmp_path / "sim"
    main(["simulate", "--config", cfg, "--out", str(sim)])
    assert main(["reconstruct", str(sim), "--config", cfg, "--out", str(tmp_path / "r")]) == 3


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text('{"seed": 1, "bogus": 2}')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    cfg = write_config(tmp_path, BASE)
    assert main(["reconstruct", str(tmp_path / "nowhere"), "--config", cfg,
                 "--out", str(tmp_path / "y")]) == 3
    # no out_dir anywhere
    assert main(["simulate", "--config", cfg]) == 2


def test_filters_outputs(tmp_path):
    cfg = write_config(tmp_path, BASE)
    out = tmp_path / "filt"
    assert main(["filters", "--config", cfg, "--out", str(out)]) == 0
    hahn = read_table(out / "filter_Hahn_tau1.csv")
    u = np.array([float(r["u"]) for r in hahn])
    f = np.array([float(r["F"]) for r in hahn])
    # the echo dip reaches (tau/2, -tau)
    mid = np.argmin(np.abs(u - 0.5))
    assert f[mid] == pytest.approx(-1.0, abs=1e-9)
    # refocusing families integrate to zero, FE to tau^2
    assert np.trapezoid(f, u) == pytest.approx(0.0, abs=1e-6)
    fe = read_table(out / "filter_FE_tau1.csv")
    ffe = np.array([float(r["F"]) for r in fe])
    assert np.trapezoid(ffe, u) == pytest.approx(1.0, abs=1e-6)
    overlap = read_table(out / "overlap.csv")
    assert len(overlap) == 9
    diag = {r["i"]: float(r["F_ij"]) for r in overlap if r["i"] == r["j"]}
    assert diag["FE@1"] == pytest.approx(4.0 / 3.0, abs=1e-5)
    freq = read_table(out / "frequency_FE_tau1.csv")
    assert len(freq) == 20
    w0, f0 = float(freq[0]["omega"]), float(freq[0]["F"])
    assert f0 == pytest.approx(4 * np.sin(w0 / 2) ** 2, rel=1e-9)
    assert (out / "filters.svg").stat().st_size > 0


def test_oracle_outputs(tmp_path):
    cfg = write_config(tmp_path, BASE)
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
    corr = read_table(out / "correlation_oracle.csv")
    t0 = float(corr[0]["t"])
    assert float(corr[0]["C"]) == pytest.approx(np.exp(-2 * t0), rel=1e-12)
    assert corr[0]["C"] == corr[0]["C_eta"]  # zero offset: columns coincide
    chi = read_table(out / "chi_oracle.csv")
    assert len(chi) == 5
    first = chi[0]
    assert first["family"] == "FE"
    # FE chi closed form: 2 [tau/c - (1 - e^{-c tau})/c^2], c = 2
    tau, c = 0.1, 2.0
    expect = 2 * (tau / c - (1 - np.exp(-c * tau)) / c**2)
    assert float(first["chi"]) == pytest.approx(expect, rel=1e-9)


def test_out_dir_from_config(tmp_path):
    data = json.loads(json.dumps(BASE))
    data["out_dir"] = str(tmp_path / "from_config")
    del data["campaign"]
    data["schedule"]["shots"] = 10
    cfg = write_config(tmp_path, data)
    assert main(["simulate", "--config", cfg]) == 0
    assert (tmp_path / "from_config" / "shots_long_time.csv").exists()


def test_records_csv_round_trip(tmp_path):
    records = [
        MeasurementRecord(index=0, t_start=0.0, spec_id="FE@0.1", basis="y", outcome=1),
        MeasurementRecord(index=1, t_start=1.0, spec_id="FE@0.1", basis="y", outcome=-1),
    ]
    path = tmp_path / "shots.csv"
    write_records_csv(records, path, seed=5)
    assert read_records_csv(path) == records


def test_coherence_csv_round_trip(tmp_path):
    estimates = [
        CoherenceEstimate(family="UDD(3)", duration=0.25, magnitude=0.875, stderr=0.0125, shots=80)
    ]
    path = tmp_path / "coherence.csv"
    write_coherence_csv(estimates, path, seed=5)
    assert read_coherence_csv(path) == estimates


def test_csv_schema_errors(tmp_path):
    path = tmp_path / "shots.csv"
    path.write_text("index,t_start\n0,0.0\n")
    with pytest.raises(DataError, match="missing column"):
        read_records_csv(path)
    with pytest.raises(DataError, match="missing data file"):
        read_coherence_csv(tmp_path / "nope.csv")
    bad = tmp_path / "coherence.csv"
    bad.write_text("family,tau,coherence,stderr,shots\nFE,oops,1.0,0.0,10\n")
    with pytest.raises(DataError, match="row 0"):
        read_coherence_csv(bad)
