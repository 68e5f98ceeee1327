import csv
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from horolab import cli


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys is not None else None
    return code, out


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def small_band(*extra):
    # cheap observable: fewer samples for the recentring constant
    return ["--mean-samples", "20000", *extra]


# --- parsing helpers --------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [("2^3..2^5", [8, 16, 32]), ("3..6", [3, 4, 5, 6]), ("1,4, 9", [1, 4, 9]), ("", [])],
)
def test_int_list(text, expected):
    assert cli.int_list(text) == expected


def test_rational_list_and_fractions():
    assert cli.rational_list("1/2, 25/64,0.2") == [Fraction(1, 2), Fraction(25, 64), Fraction(1, 5)]
    assert cli._float("3/4") == 0.75


def test_read_config(tmp_path):
    cfg = tmp_path / "a.conf"
    cfg.write_text("# comment\nN = 12\nscheme=linear  # trailing\n\n")
    assert cli.read_config(cfg) == {"N": "12", "scheme": "linear"}
    bad = tmp_path / "b.conf"
    bad.write_text("just words\n")
    with pytest.raises(cli.UsageError):
        cli.read_config(bad)


# --- exit codes -------------------------------------------------------------


def test_unknown_command_and_bad_flag(capsys):
    assert run(["frobnicate"], capsys)[0] == cli.EXIT_USAGE
    assert run(["orbit", "--nope", "1"], capsys)[0] == cli.EXIT_USAGE


def test_invalid_values_are_usage_errors(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["orbit", "--N", "-1", "--out", out], capsys)[0] == 2
    assert run(["orbit", "--z", "0.3-1j", "--out", out], capsys)[0] == 2
    assert run(["bn-norm", "--s", "0.7", "--Ns", "8", "--out", out], capsys)[0] == 2
    assert run(["moments", "--q", "3", "--out", out], capsys)[0] == 2
    code, io = run(["decay", "--out", out], capsys)
    assert code == 2 and "seed" in io.err


def test_boxdim_empty_region(tmp_path, capsys):
    code, io = run(["boxdim", "--x-range", "0.2,0.2", "--out", tmp_path], capsys)
    assert code == 2 and "empty" in io.err


def test_tolerance_failure_exit(tmp_path, capsys):
    # a tolerance below the reversibility drift of a long orbit is reported, not hidden
    code, io = run(["orbit", "--scheme", "squares", "--N", "200", "--z", "0.3+1.7j", "--tol", "1e-300",
                    "--out", tmp_path], capsys)
    assert code == cli.EXIT_TOL
    summary = json.loads((tmp_path / "orbit.summary.json").read_text())
    assert summary["status"] == "tolerance_failure" and summary["failures"]


# --- orbit ------------------------------------------------------------------


def test_orbit_zero_length_has_header_only(tmp_path, capsys):
    assert run(["orbit", "--N", "0", "--out", tmp_path], capsys)[0] == 0
    text = (tmp_path / "orbit.csv").read_text()
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body == ["n,p_n,re_z,im_z,theta"]


def test_orbit_linear_identity_stays_put(tmp_path, capsys):
    assert run(["orbit", "--scheme", "linear", "--N", "20", "--out", tmp_path], capsys)[0] == 0
    rows = read_csv(tmp_path / "orbit.csv")
    assert len(rows) == 20
    for r in rows:
        assert float(r["re_z"]) == pytest.approx(0.0, abs=1e-12)
        assert float(r["im_z"]) == pytest.approx(1.0, abs=1e-12)
        assert float(r["theta"]) == pytest.approx(0.0, abs=1e-12) or float(r["theta"]) == pytest.approx(
            2 * 3.141592653589793, abs=1e-12)


def test_csv_header_block(tmp_path, capsys):
    run(["orbit", "--N", "3", "--out", tmp_path], capsys)
    lines = (tmp_path / "orbit.csv").read_text().splitlines()
    assert lines[0].startswith("# horolab orbit")
    assert lines[1] == "# columns: n,p_n,re_z,im_z,theta"
    assert lines[2].startswith("# units:")
    assert lines[3].startswith("# config_sha256: ")
    manifest = json.loads((tmp_path / "orbit.manifest.json").read_text())
    assert manifest["config"]["N"] == 3 and "orbit" in manifest["stages"]


# --- configuration ----------------------------------------------------------


def test_config_file_and_flag_precedence(tmp_path, capsys):
    conf = tmp_path / "orbit.conf"
    conf.write_text("N = 5\nscheme = linear\n")
    run(["orbit", "--config", conf, "--out", tmp_path / "a"], capsys)
    assert len(read_csv(tmp_path / "a" / "orbit.csv")) == 5
    run(["orbit", "--config", conf, "--N", "7", "--out", tmp_path / "b"], capsys)
    rows = read_csv(tmp_path / "b" / "orbit.csv")
    assert len(rows) == 7 and rows[-1]["p_n"] == "6"


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("N = 5\ncolour = red\n")
    code, io = run(["orbit", "--config", conf, "--out", tmp_path], capsys)
    assert code == 2 and "colour" in io.err


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "env"))
    assert run(["orbit", "--N", "2"], capsys)[0] == 0
    assert (tmp_path / "env" / "orbit.csv").exists()


def test_json_format(tmp_path, capsys):
    run(["weyl", "--poly", "0,1", "--N", "8", "--ts", "0,0.5", "--format", "json", "--out", tmp_path], capsys)
    doc = json.loads((tmp_path / "weyl.json").read_text())
    assert doc["columns"] == ["t", "re_S", "im_S", "abs_S"]
    assert doc["rows"][0][3] == pytest.approx(8.0)
    assert doc["rows"][1][3] == pytest.approx(0.0, abs=1e-12)


# --- predict ----------------------------------------------------------------


def test_predict_text_and_json_agree(tmp_path, capsys):
    code, io = run(["predict"], capsys)
    assert code == 0
    lines = io.out.strip().splitlines()
    text_rows = [ln.split(",") for ln in lines[1:]]
    code, io = run(["predict", "--format", "json"], capsys)
    doc = json.loads(io.out)
    assert len(doc) == len(text_rows)
    for row, obj in zip(text_rows, doc):
        assert row[0] == obj["mode"] and row[3] == obj["recipe"]
        assert row[4] == obj["bound"]
        assert float(row[5]) == obj["value"]
    bounds = {(o["mode"], o["rate"], o["recipe"]): o["bound"] for o in doc}
    assert bounds[("spectral", "1/2", "printed")] == "11/4"
    assert bounds[("spectral", "25/64", "printed")] == "359/128"
    assert bounds[("gap_free", "1/5", "printed")] == "29/10"
    # predict writes nothing unless asked
    assert not list(tmp_path.iterdir())


def test_predict_custom_cases(capsys):
    code, io = run(["predict", "--modes", "gap_free", "--rates", "1/2,3", "--d", "1,2"], capsys)
    assert code == 0
    assert len(io.out.strip().splitlines()) == 1 + 4
    assert run(["predict", "--modes", "wild"], capsys)[0] == 2


# --- numerical commands -----------------------------------------------------


def test_moments_injective_level(tmp_path, capsys):
    code, _ = run(["moments", "--poly", "0,1", "--q", "2", "--Ns", "2^3..2^8", "--out", tmp_path], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "moments.summary.json").read_text())
    assert summary["summary"]["level"]["exponent"] == pytest.approx(1.0, abs=0.01)
    for r in read_csv(tmp_path / "moments.csv"):
        assert float(r["moment"]) == pytest.approx(1.0 / int(r["N"]), rel=1e-12)


def test_moments_fit_refused_with_few_points(tmp_path, capsys):
    assert run(["moments", "--Ns", "8,16", "--out", tmp_path], capsys)[0] == 0
    summary = json.loads((tmp_path / "moments.summary.json").read_text())
    assert "refused" in summary["summary"]["level"]


def test_bn_norm_zone_sums(tmp_path, capsys):
    code, _ = run(["bn-norm", "--poly", "0,1", "--Ns", "16,32", "--s", "0.2,0.4", "--out", tmp_path], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "bn-norm.csv")
    assert len(rows) == 4
    for r in rows:
        zones = float(r["zone_gap"]) + float(r["zone_moment"]) + float(r["zone_tail"])
        assert zones == pytest.approx(float(r["total"]), rel=1e-10)
    summary = json.loads((tmp_path / "bn-norm.summary.json").read_text())["summary"]
    assert set(summary["fits"]) == {"0.2", "0.4"}
    assert summary["delta_ceiling"] == 0.2


def test_boxdim_zero_observable(tmp_path, capsys):
    code, _ = run(["boxdim", "--observable", "zero", "--N", "32", "--delta", "0.25", "--out", tmp_path], capsys)
    assert code == 0
    s = json.loads((tmp_path / "boxdim.summary.json").read_text())["summary"]
    assert s["bad"] == 0 and s["good"] == s["total"] > 0
    assert s["empirical_ratio"] is None
    assert s["predicted_bound"]["value"] == "11/4"


def test_boxdim_three_probe_needs_seed(tmp_path, capsys):
    assert run(["boxdim", "--probe", "three", "--out", tmp_path], capsys)[0] == 2


def test_decay_single_N_refuses_fit(tmp_path, capsys):
    code, _ = run(["decay", *small_band(), "--Ns", "16", "--samples", "200", "--seed", "3", "--out", tmp_path],
                  capsys)
    assert code == 0
    s = json.loads((tmp_path / "decay.summary.json").read_text())["summary"]
    assert s["fit"]["exponent"] is None and "refused" in s["fit"]


def test_correlate_lag_zero_is_variance(tmp_path, capsys):
    code, _ = run(["correlate", *small_band(), "--ks", "0,5", "--samples", "2000", "--seed", "1",
                   "--out", tmp_path], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "correlate.csv")
    assert float(rows[0]["correlation"]) > 0


# --- determinism ------------------------------------------------------------


STOCHASTIC_RUNS = [
    ["decay", *small_band(), "--Ns", "4,8,16", "--samples", "3000", "--seed", "11"],
    ["correlate", *small_band(), "--ks", "1,3", "--samples", "3000", "--seed", "12"],
    ["boxdim", *small_band(), "--N", "32", "--delta", "0.25", "--probe", "three", "--gamma", "0.3",
     "--seed", "13"],
]


@pytest.mark.parametrize("argv", STOCHASTIC_RUNS, ids=lambda a: a[0])
def test_byte_identical_across_threads(tmp_path, capsys, argv):
    name = argv[0]
    blobs = []
    for k, threads in enumerate((1, 4, 1)):
        out = tmp_path / str(k)
        assert run([*argv, "--threads", threads, "--out", out], capsys)[0] == 0
        blobs.append(((out / f"{name}.csv").read_bytes(), (out / f"{name}.summary.json").read_bytes()))
    assert blobs[0] == blobs[1] == blobs[2]


def test_seed_changes_output(tmp_path, capsys):
    argv = ["decay", *small_band(), "--Ns", "4,8", "--samples", "500"]
    run([*argv, "--seed", "1", "--out", tmp_path / "a"], capsys)
    run([*argv, "--seed", "2", "--out", tmp_path / "b"], capsys)
    assert (tmp_path / "a" / "decay.csv").read_bytes() != (tmp_path / "b" / "decay.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "horolab.cli", "predict"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "359/128" in proc.stdout
