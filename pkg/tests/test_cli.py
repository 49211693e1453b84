"""CLI tests: exit codes, CSV schema, manifests, presets, fault injection."""

import csv
import json

import pytest

from ssknoma import cli
from ssknoma import montecarlo as mc

BER_CONFIG = {
    "scheme": "ssk-noma",
    "n_users": 3,
    "n_r": 2,
    "snr_grid_db": [5.0, 10.0],
    "seed": 17,
    "max_trials": 100000,
}


def _write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_ber_command_writes_csv_and_manifest(tmp_path):
    cfg = _write_config(tmp_path, BER_CONFIG)
    out = tmp_path / "run"
    rc = cli.main(["ber", "--config", cfg, "--out", str(out), "--quiet"])
    assert rc == 0
    rows = _read_csv(out / "ber.csv")
    assert rows[0] == cli.CSV_COLUMNS
    # 2 SNR points x 3 users
    assert len(rows) == 1 + 6
    users = {r[1] for r in rows[1:]}
    assert users == {"1", "2", "3"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "ber"
    assert manifest["seeds"] == [17]
    assert "timestamp" in manifest and "version" in manifest


def test_csv_payload_reproducible_across_workers(tmp_path, monkeypatch):
    cfg = _write_config(tmp_path, BER_CONFIG)
    payloads = []
    for workers in ("1", "2"):
        monkeypatch.setenv("SSKNOMA_WORKERS", workers)
        out = tmp_path / f"w{workers}"
        assert cli.main(["ber", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        payloads.append((out / "ber.csv").read_bytes())
    assert payloads[0] == payloads[1]


def test_seed_flag_overrides_config(tmp_path):
    cfg = _write_config(tmp_path, BER_CONFIG)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli.main(["ber", "--config", cfg, "--out", str(out_a), "--quiet",
                     "--seed", "99"]) == 0
    assert cli.main(["ber", "--config", cfg, "--out", str(out_b), "--quiet"]) == 0
    assert (out_a / "ber.csv").read_bytes() != (out_b / "ber.csv").read_bytes()


def test_multi_run_document(tmp_path):
    doc = {
        "snr_grid_db": [10.0],
        "seed": 3,
        "max_trials": 100000,
        "runs": [
            {"scheme": "ssk-noma", "n_users": 3, "n_r": 2},
            {"scheme": "noma-baseline", "n_users": 3, "n_r": 2},
        ],
    }
    cfg = _write_config(tmp_path, doc)
    out = tmp_path / "multi"
    assert cli.main(["capacity", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    rows = _read_csv(out / "rate.csv")
    schemes = {r[2] for r in rows[1:]}
    assert schemes == {"ssk-noma", "noma-baseline"}
    # per-user rows plus the sum-rate row (user 0) for each run
    assert {"0", "1", "2", "3"} == {r[1] for r in rows[1:]}


def test_outage_command(tmp_path):
    doc = dict(BER_CONFIG, target_rates=[1.0, 1.0, 1.5], snr_grid_db=[10.0])
    cfg = _write_config(tmp_path, doc)
    out = tmp_path / "outage"
    assert cli.main(["outage", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    rows = _read_csv(out / "outage.csv")
    assert len(rows) == 1 + 3
    for r in rows[1:]:
        assert r[5] != ""  # analytic companion attached
        assert 0.0 <= float(r[3]) <= 1.0


# --- error handling -------------------------------------------------------------


def test_missing_config_is_config_error(tmp_path):
    assert cli.main(["ber", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path)]) == 2
    assert cli.main(["ber", "--out", str(tmp_path)]) == 2


def test_invalid_json_is_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["ber", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_empty_grid_is_config_error(tmp_path):
    cfg = _write_config(tmp_path, dict(BER_CONFIG, snr_grid_db=[]))
    assert cli.main(["validate", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_missing_field_is_config_error(tmp_path):
    doc = dict(BER_CONFIG)
    del doc["n_r"]
    cfg = _write_config(tmp_path, doc)
    assert cli.main(["ber", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_unknown_preset_is_config_error(tmp_path):
    assert cli.main(["ber", "--preset", "fig99", "--out", str(tmp_path)]) == 2


# --- presets ---------------------------------------------------------------------


@pytest.mark.parametrize("name", ["fig2", "fig3", "fig4", "fig5", "fig6",
                                  "fig7", "fig8", "fig9", "table1"])
def test_presets_parse(name):
    doc = cli._load_preset(name)
    assert isinstance(doc, dict)


@pytest.mark.parametrize("name", ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7"])
def test_sweep_presets_build_valid_configs(name):
    doc = cli._load_preset(name)

    class Args:
        seed = None
        trials_max = None

    configs = cli._runs_from_doc(doc, Args)
    assert configs and all(isinstance(c, mc.SimConfig) for c in configs)


# --- complexity ------------------------------------------------------------------


def test_complexity_default_table(capsys):
    assert cli.main(["complexity"]) == 0
    out = capsys.readouterr().out
    for left, right in ((72, 108), (312, 408), (140, 184), (760, 688),
                        (240, 280), (2000, 1040)):
        assert f"{left:>10} {right:>10}" in out


def test_complexity_single_row(capsys):
    assert cli.main(["complexity", "--row", "3,2,2"]) == 0
    out = capsys.readouterr().out
    assert "72" in out and "108" in out


# --- pa sweep --------------------------------------------------------------------


def test_pa_sweep_grid(tmp_path):
    doc = {"snr_db": 20.0, "n_r": 2, "target_rates": [1.0, 1.0, 1.5]}
    cfg = _write_config(tmp_path, doc)
    out = tmp_path / "pa"
    assert cli.main(["pa-sweep", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    rows = _read_csv(out / "pa_sweep.csv")
    assert len(rows) == 1 + 9  # default a2 grid 0.55..0.95
    assert rows[0][:2] == ["a2", "snr_db"]
    assert "outage_u2" in rows[0]
    # stronger-user error rate never improves as its power share shrinks
    u2 = [float(r[rows[0].index("abep_u2")]) for r in rows[1:]]
    assert all(a >= b for a, b in zip(u2, u2[1:]))


def test_pa_sweep_rejects_out_of_range_a2(tmp_path):
    cfg = _write_config(tmp_path, {"a2_grid": [0.4]})
    assert cli.main(["pa-sweep", "--config", cfg, "--out", str(tmp_path)]) == 2


# --- validate --------------------------------------------------------------------


VALIDATE_CONFIG = {
    "scheme": "ssk-noma",
    "n_users": 3,
    "n_r": 2,
    "snr_grid_db": [5.0, 10.0, 15.0],
    "seed": 23,
    "max_trials": 200000,
}


def test_validate_passes_in_coverage(tmp_path, capsys):
    cfg = _write_config(tmp_path, VALIDATE_CONFIG)
    rc = cli.main(["validate", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "validation passed" in out


def test_validate_fails_on_corrupted_constant(tmp_path, monkeypatch, capsys):
    """Fault injection: a wrong closed-form constant must trip the gate and
    name the offending metric."""
    import ssknoma.montecarlo as engine

    real = engine.analytics.abep_u2
    monkeypatch.setattr(engine.analytics, "abep_u2",
                        lambda *a, **k: 2.0 * real(*a, **k))
    cfg = _write_config(tmp_path, VALIDATE_CONFIG)
    rc = cli.main(["validate", "--config", cfg, "--out", str(tmp_path), "--quiet"])
    out = capsys.readouterr().out
    assert rc == 3
    assert "ber/user2" in out
