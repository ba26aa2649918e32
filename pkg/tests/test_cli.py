import numpy as np
import pytest

from levytransport.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def _assert_header(text, seed):
    lines = text.split("\n")
    assert lines[0].startswith("# levytransport ")
    assert lines[1].startswith("# config ")
    assert lines[2] == f"# seed {seed}"


def test_eigs_stdout(capsys):
    code, out = run_cli(
        capsys, "eigs", "--nu", "1.0", "--n-quad", "64", "--n-modes", "5"
    )
    assert code == 0
    _assert_header(out, "none")
    lines = out.strip().split("\n")
    assert lines[3] == "mode,eigenvalue,cumulative,tail"
    assert len(lines) == 9
    evs = [float(l.split(",")[1]) for l in lines[4:]]
    assert evs == sorted(evs, reverse=True)


def test_eigs_cache_dir(tmp_path, capsys):
    run_cli(
        capsys, "eigs", "--nu", "1.0", "--n-quad", "32",
        "--cache-dir", str(tmp_path), "--out", str(tmp_path / "e.csv"),
    )
    assert list(tmp_path.glob("eig_*.npz"))
    assert (tmp_path / "e.csv").exists()


def test_sample_noise_deterministic(capsys):
    args = ("sample-noise", "--seed", "3", "--dt", "0.25", "--n-modes", "4",
            "--steps", "3")
    _, first = run_cli(capsys, *args)
    _, second = run_cli(capsys, *args)
    assert first == second
    _assert_header(first, "3")
    rows = first.strip().split("\n")[4:]
    assert len(rows) == 12  # steps x modes
    t, mode, inc = rows[0].split(",")
    assert float(t) == 0.25 and int(mode) == 1
    float(inc)  # parses as a number


def test_sample_noise_stream_independence(capsys):
    base = ("sample-noise", "--seed", "3", "--dt", "0.25", "--n-modes", "2")
    _, a = run_cli(capsys, *base, "--stream", "0")
    _, b = run_cli(capsys, *base, "--stream", "1")
    assert a.split("\n")[4:] != b.split("\n")[4:]


def test_solve_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "path.csv"
    code, _ = run_cli(
        capsys, "solve", "--nu", "1.0", "--h-exp", "3", "--m", "8",
        "--seed", "1", "--n-modes", "5", "--n-quad", "64",
        "--record-every", "4", "--out", str(out),
    )
    assert code == 0
    text = out.read_text()
    _assert_header(text, "1")
    assert "step,element_index" in text
    # 3 comment lines, 1 column header, then steps 0, 4, 8 over 8 elements
    assert len(text.strip().split("\n")) == 3 + 1 + 3 * 8


def test_solve_rejects_multiple_samples(capsys):
    with pytest.raises(SystemExit):
        main(["solve", "--nu", "1.0", "--h-exp", "3", "--m", "4",
              "--samples", "2", "--seed", "1"])


def test_converge_writes_reports(tmp_path, capsys):
    code, out = run_cli(
        capsys, "converge", "--nu-list", "1.0", "--h-exps", "3,4",
        "--ref-exp", "5", "--samples", "3", "--seed", "5",
        "--n-quad", "256", "--out-dir", str(tmp_path), "--quiet",
    )
    assert code == 0
    rmse = (tmp_path / "rmse.csv").read_text()
    rates = (tmp_path / "rates.csv").read_text()
    _assert_header(rmse, "5")
    _assert_header(rates, "5")
    assert "nu,h,m,N,samples,aborted,rmse,ci_lo,ci_hi" in rmse
    rows = rmse.strip().split("\n")[4:]
    assert len(rows) == 2
    for row in rows:
        vals = row.split(",")
        assert float(vals[6]) > 0.0
        assert float(vals[7]) <= float(vals[6]) <= float(vals[8])


def test_det_check(tmp_path, capsys):
    out = tmp_path / "det.csv"
    code, _ = run_cli(
        capsys, "det-check", "--h-exps", "3,4,5", "--out", str(out)
    )
    assert code == 0
    text = out.read_text()
    _assert_header(text, "none")
    rows = text.strip().split("\n")[4:]
    assert len(rows) == 3
    errs = [float(r.split(",")[1]) for r in rows]
    assert errs[2] < errs[0]


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "levytransport" in capsys.readouterr().out
