import json

import numpy as np
import pytest

from hdmosum.cli import main
from hdmosum.panel import Panel, save_panel_csv


@pytest.fixture
def step_csv(tmp_path):
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((200, 50))
    Y[100:] += 1.0
    path = tmp_path / "step.csv"
    save_panel_csv(path, Panel(Y))
    return path


def unit_scales(tmp_path, p):
    path = tmp_path / "ones.json"
    path.write_text(json.dumps([1.0] * p))
    return f"known:{path}"


@pytest.fixture
def ones(tmp_path):
    return unit_scales(tmp_path, 50)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_detect_noiseless_fixture(tmp_path, capsys):
    Y = np.zeros((100, 10))
    Y[50:] += 1.0
    path = tmp_path / "clean.csv"
    save_panel_csv(path, Panel(Y + 1e-3 * np.random.default_rng(1).standard_normal(Y.shape)))
    code, out, _ = run(capsys, "detect", "--input", path, "--bn", 10, "--reps", 200)
    assert code == 0
    res = json.loads(out)
    assert res["k_hat"] == 1 and res["breaks"][0]["tau"] == 51


def test_stdout_is_single_json_and_manifest(step_csv, ones, tmp_path, capsys):
    out_path = tmp_path / "res.json"
    code, out, err = run(capsys, "detect", "--input", step_csv, "--bn", 20, "--reps", 200,
                         "--lrv", ones, "--out", out_path, "--seed", 5)
    assert code == 0
    assert json.loads(out) == json.loads(out_path.read_text())
    man = json.loads((tmp_path / "res.json.manifest.json").read_text())
    assert man["seed"] == 5 and "numpy" in man["versions"]
    assert "loaded panel" in err
    # rerunning from the manifest reproduces the result
    code, again, _ = run(capsys, *man["argv"])
    assert again == out


def test_seed_from_environment(step_csv, ones, capsys, monkeypatch):
    monkeypatch.setenv("HDMOSUM_SEED", "17")
    _, a, _ = run(capsys, "threshold", "--n", 100, "--p", 5, "--bn", 10, "--reps", 100)
    assert json.loads(a)["seed"] == 17
    _, b, _ = run(capsys, "threshold", "--n", 100, "--p", 5, "--bn", 10, "--reps", 100,
                  "--seed", 17)
    assert a == b


def test_exit_codes(step_csv, tmp_path, capsys):
    code, out, err = run(capsys, "detect", "--input", tmp_path / "missing.csv", "--bn", 10)
    assert code == 3 and out == ""
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 3
    code, _, _ = run(capsys, "detect", "--input", step_csv, "--bn", 10, "--alpha", 1.5)
    assert code == 2
    code, _, _ = run(capsys, "detect", "--input", step_csv, "--bn", 10, "--b", 0.1)
    assert code == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,nan\n2,3\n")
    code, _, _ = run(capsys, "detect", "--input", bad, "--bn", 1)
    assert code == 5
    code, _, _ = run(capsys, "nonsense")
    assert code == 2


def test_twoway_and_threshold_cache(step_csv, ones, tmp_path, capsys):
    nb = tmp_path / "nb.json"
    ids = [f"s{j}" for j in range(1, 51)]
    nb.write_text(json.dumps([{"id": 1, "members": ids[:25]}, {"id": 2, "members": ids[25:]}]))
    code, thr, _ = run(capsys, "threshold", "--input", step_csv, "--mode", "twoway",
                       "--nbhds", nb, "--bn", 20, "--reps", 200)
    assert code == 0
    thr_path = tmp_path / "thr.json"
    thr_path.write_text(thr)
    code, out, err = run(capsys, "detect2w", "--input", step_csv, "--nbhds", nb, "--bn", 20,
                         "--lrv", ones, "--threshold", thr_path)
    assert code == 0 and "cached threshold" in err
    res = json.loads(out)
    assert res["omega_used"] == json.loads(thr)["omega"]
    assert res["k_hat"] >= 1 and res["breaks"][0]["tau"] in range(95, 106)


def test_lrv_command(tmp_path, capsys):
    path = tmp_path / "long.csv"
    save_panel_csv(path, Panel(2.0 * np.random.default_rng(4).standard_normal((4000, 3))))
    code, out, _ = run(capsys, "lrv", "--input", path, "--full")
    assert code == 0
    res = json.loads(out)
    assert np.allclose(res["sigma_diag"], 2.0, atol=0.3)
    assert np.allclose(np.diag(res["sigma_full"]), np.square(res["sigma_diag"]))


def test_scan_single_break(tmp_path, capsys):
    rng = np.random.default_rng(2)
    Y = rng.standard_normal((200, 300))
    Y[100:] += 1.0
    path = tmp_path / "one.csv"
    save_panel_csv(path, Panel(Y))
    code, out, _ = run(capsys, "scan-bn", "--input", path, "--grid", "5,10,20",
                       "--reps", 500, "--lrv", unit_scales(tmp_path, 300))
    res = json.loads(out)
    assert code == 0
    assert [r["k_hat"] for r in res["grid"]] == [1, 1, 1]
    assert res["first_drop_bn"] is None


def test_scan_flags_drop(tmp_path, capsys):
    # breaks 30 apart: a window of 40 cannot separate them
    rng = np.random.default_rng(3)
    Y = rng.standard_normal((240, 300))
    Y[100:] += 1.0
    Y[130:] -= 1.0
    path = tmp_path / "two.csv"
    save_panel_csv(path, Panel(Y))
    code, out, _ = run(capsys, "scan-bn", "--input", path, "--grid", "10,40",
                       "--reps", 500, "--lrv", unit_scales(tmp_path, 300))
    res = json.loads(out)
    assert code == 0
    assert {101, 131} <= set(res["grid"][0]["taus"])
    assert res["first_drop_bn"] == 40


def test_scan_empty_grid(step_csv, capsys):
    code, _, _ = run(capsys, "scan-bn", "--input", step_csv, "--grid", "")
    assert code == 2


def test_simulate_and_bench(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "size", "n": 80, "p": 5, "bn": 10,
                               "reps": 20, "mc_reps": 100}))
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--csv", tmp_path / "t.csv")
    assert code == 0 and json.loads(out)["kind"] == "size"
    assert (tmp_path / "t.csv").read_text().startswith("model,")
    cfg.write_text(json.dumps({"experiment": "size", "bogus": 1}))
    assert run(capsys, "simulate", "--config", cfg)[0] == 2
    code, out, _ = run(capsys, "bench", "--reps", 5, "--mc-reps", 50, "size_iid_p50")
    assert code == 0 and "size_iid_p50" in json.loads(out)
    assert run(capsys, "bench", "nope")[0] == 2
