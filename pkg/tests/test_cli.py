import csv

import pytest

from tubeswarm.cli import ConfigError, load_config, main, parse_seeds, scenario_from_config

QUICK = ["--sigma-p", "0", "--sigma-v", "0", "--duration", "0.5"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--scenario", "open6", "--variant", "modified", "--seed", "7", "--duration", "0.5",
                 "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["scenario.ini", "summary.csv", "trace.csv"]
    summary = rows(out / "summary.csv")
    assert summary[0]["seed"] == "7" and summary[0]["variant"] == "modified"
    assert "collision_count" in capsys.readouterr().out


def test_run_zero_noise_is_safe(tmp_path):
    out = tmp_path / "z"
    assert main(["run", *QUICK, "--out", str(out)]) == 0
    s = rows(out / "summary.csv")[0]
    assert s["collision_count"] == "0" and float(s["boundary_violation_time"]) == 0


def test_run_is_byte_identical(tmp_path):
    args = ["run", "--seed", "3", "--duration", "0.4", "--trace-terms", "--drift-mode", "A"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("trace.csv", "summary.csv", "scenario.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert rows(tmp_path / "a" / "trace.csv")[0]["u5y"] is not None


def test_unwritable_output_exits_2(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", *QUICK, "--out", str(blocker / "sub")]) == 2
    assert "--out" in capsys.readouterr().err


def test_failed_run_leaves_no_partial_files(tmp_path, monkeypatch):
    import tubeswarm.cli as cli

    def boom(*a, **k):
        raise RuntimeError("disk full")

    monkeypatch.setattr(cli, "write_summary", boom)
    out = tmp_path / "o"
    with pytest.raises(RuntimeError):
        main(["run", *QUICK, "--out", str(out)])
    assert list(out.iterdir()) == []


def test_scenario_file_roundtrip(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text(
        "[scenario]\nname = corridor\nwaypoints = [[0, 0], [6, 0], [9, 2]]\nhalf_width = 0.8\n"
        "positions = [[0.5, 0.3], [0.5, -0.3]]\nduration = 1.0\nvariant = original\n"
        "[gains]\nk_v = 2.0\n[noise]\nsigma_p = 0.01\nsigma_v = 0.01\ndrift_mode = A\n"
    )
    out = tmp_path / "o"
    assert main(["run", "--scenario", str(ini), "--out", str(out)]) == 0
    assert rows(out / "summary.csv")[0]["variant"] == "original"
    assert "corridor" in (out / "scenario.ini").read_text()


@pytest.mark.parametrize("body,field", [
    ("[scenario]\nbase = open6\n[gains]\nk2 = abc\n", "k2"),
    ("[scenario]\nbase = open6\n[gains]\nbogus = 1\n", "bogus"),
    ("[scenario]\nbase = open7\n", "base"),
    ("[scenario]\nwaypoints = [[0, 0], [5, 0]]\n", "positions"),
    ("[scenario]\nwaypoints = [[0, 0], [5, 0]]\npositions = [[1, 0], [1, 0.1]]\n", "positions"),
    ("[scenario]\nbase = closed10\n[noise]\ndrift_mode = C\n", "drift_mode"),
])
def test_invalid_scenario_exits_2_naming_field(tmp_path, capsys, body, field):
    ini = tmp_path / "bad.ini"
    ini.write_text(body)
    out = tmp_path / "o"
    assert main(["run", "--scenario", str(ini), "--out", str(out)]) == 2
    assert field in capsys.readouterr().err
    assert not out.exists()


def test_scenario_file_inline_comments(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[scenario]\nbase = closed10   ; inherit\nduration = 0.2  # short\n")
    cfg = load_config(ini)
    sc = scenario_from_config(cfg)
    assert sc.name == "closed10" and sc.duration == 0.2


def test_missing_scenario_file(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 2


def test_parse_seeds():
    assert parse_seeds("0..19") == list(range(20))
    assert parse_seeds("5,1,5") == [1, 5]
    with pytest.raises(ConfigError):
        parse_seeds("3..1")


def test_compare_zero_noise_tie(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["compare", "--seeds", "0..1", *QUICK, "--out", str(out)]) == 0
    assert len(rows(out / "comparison.csv")) == 4
    assert "tie" in capsys.readouterr().out


def test_compare_single_seed_exits_2(tmp_path):
    assert main(["compare", "--seeds", "4..4", "--out", str(tmp_path / "c")]) == 2


def test_lemma2_ratios(tmp_path, capsys):
    out = tmp_path / "l"
    assert main(["lemma2", "--N", "1,2,6", "--k5", "1", "--kv", "1", "--trials", "10",
                 "--mc-duration", "6", "--burn-in", "1", "--out", str(out)]) == 0
    table = rows(out / "lemma2.csv")
    assert [float(r["ratio"]) for r in table] == pytest.approx([1, 2 / 3, 2 / 7], rel=1e-12)
    assert float(table[0]["sigma_spectral"]) == pytest.approx(0.5, rel=1e-6)
    assert float(table[0]["sigma_closed"]) == 0.5
    assert "max relative disagreement" in capsys.readouterr().out


def test_lemma2_empty_grid(tmp_path):
    assert main(["lemma2", "--N", "", "--out", str(tmp_path / "l")]) == 2


def test_lemma2_instability_exit(tmp_path, capsys, monkeypatch):
    import tubeswarm.cli as cli
    from tubeswarm.errors import MonteCarloInstability

    def unstable(N, kv, k5, *a, **k):
        raise MonteCarloInstability(f"variance grows for N={N}, k_v={kv}, k5={k5}")

    monkeypatch.setattr(cli, "monte_carlo_variance", unstable)
    assert main(["lemma2", "--N", "4", "--out", str(tmp_path / "l")]) == 3
    assert "N=4" in capsys.readouterr().err


def test_export_plots(tmp_path):
    run = tmp_path / "r"
    assert main(["run", "--duration", "0.6", "--out", str(run)]) == 0
    plots = tmp_path / "p"
    assert main(["export-plots", str(run / "trace.csv"), "--out", str(plots)]) == 0
    assert sorted(p.name for p in plots.iterdir()) == [
        "d_t_all.csv", "drift.csv", "trajectories.csv", "tube_boundary.csv"]
    assert len(rows(plots / "d_t_all.csv")) == 30


def test_export_plots_closed_boundary_loops(tmp_path):
    run = tmp_path / "r"
    assert main(["run", "--scenario", "closed10", "--duration", "0.1", "--out", str(run)]) == 0
    assert main(["export-plots", str(run / "trace.csv"), "--out", str(tmp_path / "p")]) == 0
    b = rows(tmp_path / "p" / "tube_boundary.csv")
    for side in ("left", "right"):
        pts = [(r["x"], r["y"]) for r in b if r["side"] == side]
        assert pts[0] == pts[-1]


def test_export_plots_bad_trace(tmp_path, capsys):
    empty = tmp_path / "t.csv"
    empty.write_text("")
    assert main(["export-plots", str(empty), "--scenario", "open6", "--out", str(tmp_path / "p")]) == 2
    bad = tmp_path / "b.csv"
    bad.write_text("t,robot_id,px,py,vx,vy,phatx,phaty,vhatx,vhaty,d_t,min_nbr_dist,passed\n0,0,1\n")
    assert main(["export-plots", str(bad), "--scenario", "open6", "--out", str(tmp_path / "p")]) == 2
    assert "line 2" in capsys.readouterr().err
