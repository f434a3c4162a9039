import csv
import json

import pytest

from vlsfopt.cli import main

BSC = "bsc:delta=0.11"

CDF_COLUMNS = [
    "n",
    "gamma",
    "p_saddle_lower",
    "p_saddle_upper",
    "p_saddle_exactlattice",
    "p_oracle",
    "oracle_stderr",
    "branch",
]

SWEEP_COLUMNS = [
    "channel", "param", "bits", "eps", "t", "rule",
    "rate_bits", "objective", "gamma",
    "n1", "n2", "n3", "n4", "n5", "n6", "n7", "n8",
    "feasible",
]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- cdf -------------------------------------------------------------------------


def test_cdf_exact_oracle_table(tmp_path):
    out = tmp_path / "cdf.csv"
    rc = main(
        [
            "cdf", "--channel", BSC, "--n", "10,20", "--gamma", "3.0",
            "--oracle", "exact", "--out", str(out),
        ]
    )
    assert rc == 0
    rows = read_csv(out)
    assert rows[0] == CDF_COLUMNS
    assert len(rows) == 3
    for row in rows[1:]:
        lower, upper = float(row[2]), float(row[3])
        exact = float(row[5])
        assert row[6] == ""  # the exact oracle has no sampling error
        assert lower <= exact + 1e-3
        assert upper >= exact - 1e-3
        assert float(row[4]) == pytest.approx(exact, rel=0.05, abs=1e-8)


def test_cdf_auto_grid_row_count(tmp_path):
    out = tmp_path / "cdf.csv"
    rc = main(
        ["cdf", "--channel", BSC, "--n", "50", "--gamma-grid", "auto", "--out", str(out)]
    )
    assert rc == 0
    rows = read_csv(out)
    assert len(rows) == 201
    gammas = [float(r[1]) for r in rows[1:]]
    assert gammas == sorted(gammas)
    values = [float(r[2]) for r in rows[1:]]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


def test_cdf_mc_oracle_reports_stderr(tmp_path):
    out = tmp_path / "cdf.csv"
    rc = main(
        [
            "cdf", "--channel", "awgn:snr=1.0", "--n", "40", "--gamma", "13.0",
            "--oracle", "mc", "--trials", "20000", "--seed", "3", "--out", str(out),
        ]
    )
    assert rc == 0
    row = read_csv(out)[1]
    p_hat, stderr = float(row[5]), float(row[6])
    assert 0.0 <= p_hat <= 1.0
    assert stderr > 0.0
    assert abs(float(row[2]) - p_hat) <= 6.0 * stderr


def test_cdf_argument_errors(tmp_path):
    assert main(["cdf", "--channel", BSC, "--gamma", "3.0"]) == 2  # missing --n
    assert main(["cdf", "--channel", BSC, "--n", "10"]) == 2  # no gamma source
    assert main(["cdf", "--channel", "bsc:delta=2", "--n", "10", "--gamma", "1"]) == 2
    assert main(["cdf", "--channel", BSC, "--n", "10", "--gamma-grid", "5:1:10"]) == 2
    assert (
        main(["cdf", "--channel", "awgn:snr=1.0", "--n", "10", "--gamma", "3.0",
              "--oracle", "exact"])
        == 3
    )


# -- optimize ----------------------------------------------------------------------


def test_optimize_json_payload_and_reruns(tmp_path):
    args = [
        "optimize", "--channel", BSC, "--bits", "20", "--eps", "1e-3",
        "--t", "2", "--rule", "p1",
    ]
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    for key in (
        "channel", "bits", "eps", "t", "rule", "gamma", "instants",
        "objective", "rate_bits", "residual", "diagnostics",
    ):
        assert key in payload
    assert payload["rule"] == "p1"
    assert len(payload["instants"]) == 2
    assert payload["rate_bits"] == pytest.approx(20.0 / payload["objective"])


def test_optimize_both_rules_orders_rates(tmp_path):
    out = tmp_path / "both.json"
    rc = main(
        [
            "optimize", "--channel", BSC, "--bits", "20", "--eps", "1e-3",
            "--t", "2", "--rule", "both", "--out", str(out),
        ]
    )
    assert rc == 0
    payloads = json.loads(out.read_text())
    assert [p["rule"] for p in payloads] == ["p1", "p2"]
    assert payloads[1]["rate_bits"] >= payloads[0]["rate_bits"] - 1e-12


def test_optimize_certify_agrees_with_exhaustive(tmp_path):
    out = tmp_path / "cert.json"
    rc = main(
        [
            "optimize", "--channel", BSC, "--bits", "20", "--eps", "1e-3",
            "--t", "2", "--rule", "p1", "--certify", "--out", str(out),
        ]
    )
    assert rc == 0
    cert = json.loads(out.read_text())["certify"]
    assert cert["rate_gap"] <= 0.005
    assert cert["instants_gap"] <= 2


def test_optimize_errors():
    base = ["optimize", "--channel", BSC, "--bits", "20", "--eps", "1e-3"]
    assert main(base + ["--t", "4", "--certify"]) == 2
    assert main(base + ["--t", "0"]) == 2
    assert main(base[:-2] + ["--eps", "2.0", "--t", "1"]) == 2
    assert (
        main(["optimize", "--channel", "bsc:delta=0.499", "--bits", "100",
              "--eps", "1e-3", "--t", "1"])
        == 4
    )


# -- sweep -------------------------------------------------------------------------


def test_sweep_csv_schema_and_determinism(tmp_path):
    args = [
        "sweep", "--channel", BSC, "--bits", "20", "--eps", "1e-3",
        "--t", "1:3", "--rule", "both",
    ]
    out1, out2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    rows = read_csv(out1)
    assert rows[0] == SWEEP_COLUMNS
    assert len(rows) == 7
    for row in rows[1:]:
        assert row[0] == BSC
        assert row[5] in ("p1", "p2")
        assert row[-1] == "true"
        t = int(row[4])
        filled = [c for c in row[9:17] if c != ""]
        assert len(filled) == t


def test_sweep_all_infeasible_exits_4(tmp_path):
    out = tmp_path / "s.csv"
    rc = main(
        [
            "sweep", "--channel", "bsc:delta=0.499", "--bits", "100",
            "--eps", "1e-3", "--t", "1", "--rule", "p1", "--out", str(out),
        ]
    )
    assert rc == 4
    rows = read_csv(out)
    assert rows[1][-1] == "false"
    assert rows[1][6] == ""  # rate column empty for infeasible cells


def test_sweep_argument_errors():
    base = ["sweep", "--channel", BSC, "--bits", "20", "--eps", "1e-3", "--rule", "p1"]
    assert main(base + ["--t", "9"]) == 2
    assert main(base + ["--t", "0"]) == 2
    assert main(base + ["--t", "3:1"]) == 2
    assert main(base + ["--t", "x"]) == 2


def test_sweep_dense_reference_rows(tmp_path):
    out = tmp_path / "s.csv"
    rc = main(
        [
            "sweep", "--channel", BSC, "--bits", "20", "--eps", "1e-2",
            "--t", "2", "--rule", "p1", "--dense-ref", "--out", str(out),
        ]
    )
    assert rc == 0
    rows = read_csv(out)
    assert rows[1][5] == "dense"
    assert rows[1][4] == "0"
    assert float(rows[1][7]) <= float(rows[2][7]) + 1e-9


# -- config files --------------------------------------------------------------------


def test_toml_config_with_flag_override(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(
        '[sweep]\nchannel = "bsc:delta=0.11"\nbits = "20"\neps = "1e-2"\n'
        't = "1"\nrule = "p1"\n'
    )
    out1 = tmp_path / "a.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out1)]) == 0
    rows = read_csv(out1)
    assert rows[1][2] == "20"
    out2 = tmp_path / "b.csv"
    assert main(["sweep", "--config", str(cfg), "--bits", "24", "--out", str(out2)]) == 0
    assert read_csv(out2)[1][2] == "24"


def test_json_config(tmp_path):
    cfg = tmp_path / "opt.json"
    cfg.write_text(
        json.dumps(
            {
                "channel": "bsc:delta=0.11",
                "optimize": {"bits": 20, "eps": 1e-3, "t": 1, "rule": "p1"},
            }
        )
    )
    out = tmp_path / "o.json"
    assert main(["optimize", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["t"] == 1


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("not toml [ ===")
    assert main(["sweep", "--config", str(bad)]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.toml")]) == 2
    scalar = tmp_path / "scalar.json"
    scalar.write_text("[1, 2]")
    assert main(["sweep", "--config", str(scalar)]) == 2


# -- simulate ------------------------------------------------------------------------


@pytest.fixture()
def schedule_file(tmp_path):
    path = tmp_path / "sched.json"
    rc = main(
        [
            "optimize", "--channel", BSC, "--bits", "12", "--eps", "1e-2",
            "--t", "2", "--rule", "p1", "--out", str(path),
        ]
    )
    assert rc == 0
    return path


def test_simulate_protocol_payload(schedule_file, tmp_path):
    out = tmp_path / "sim.json"
    rc = main(
        [
            "simulate", "--schedule", str(schedule_file), "--msim", "64",
            "--trials", "2000", "--seed", "1", "--out", str(out),
        ]
    )
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["mode"] == "protocol"
    assert payload["trials"] == 2000
    assert set(payload["outcome_counts"]) == {"correct", "false_alarm", "final_error"}
    assert sum(payload["outcome_counts"].values()) == 2000
    assert payload["bound"]["objective"] > 0
    assert payload["rule"] == "p1"


def test_simulate_stopping_only_payload(schedule_file, tmp_path):
    out = tmp_path / "stop.json"
    rc = main(
        [
            "simulate", "--schedule", str(schedule_file), "--stopping-only",
            "--trials", "5000", "--seed", "1", "--out", str(out),
        ]
    )
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["mode"] == "stopping_only"
    assert len(payload["continue_freq"]) == 2
    assert payload["mean_tau"] <= payload["bound"]["objective"] + 1.0


def test_simulate_seed_sources(schedule_file, tmp_path, monkeypatch):
    args = [
        "simulate", "--schedule", str(schedule_file), "--msim", "32",
        "--trials", "1000",
    ]
    flagged = tmp_path / "flag.json"
    assert main(args + ["--seed", "7", "--out", str(flagged)]) == 0
    monkeypatch.setenv("VLSF_SEED", "7")
    env = tmp_path / "env.json"
    assert main(args + ["--out", str(env)]) == 0
    assert flagged.read_bytes() == env.read_bytes()
    monkeypatch.setenv("VLSF_SEED", "abc")
    assert main(args + ["--out", str(tmp_path / "x.json")]) == 2


def test_simulate_schedule_file_errors(schedule_file, tmp_path):
    assert main(["simulate", "--msim", "16", "--trials", "10"]) == 2
    missing = ["simulate", "--schedule", str(tmp_path / "nope.json"), "--msim", "16"]
    assert main(missing) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["simulate", "--schedule", str(bad), "--msim", "16"]) == 2
    multi = tmp_path / "multi.json"
    rc = main(
        [
            "optimize", "--channel", BSC, "--bits", "12", "--eps", "1e-2",
            "--t", "1", "--rule", "both", "--out", str(multi),
        ]
    )
    assert rc == 0
    assert main(["simulate", "--schedule", str(multi), "--msim", "16"]) == 2
    assert (
        main(["simulate", "--schedule", str(schedule_file), "--msim", "16",
              "--rule", "both"])
        == 2
    )
    assert main(["simulate", "--schedule", str(schedule_file), "--msim", "1"]) == 2
    assert main(["simulate", "--schedule", str(schedule_file)]) == 2


def test_entry_point_requires_subcommand():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
