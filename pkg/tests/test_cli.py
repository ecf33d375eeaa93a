import json
import re

import pytest

from lobtree import cli
from lobtree.registry import REGISTRY, list_experiments


def _strip(text):
    return re.sub(r"^# .*\n", "", text)


def test_list_catalog(capsys):
    assert cli.main(["list"]) == cli.EXIT_PASS
    out = capsys.readouterr().out
    assert re.search(r"tail_psi_star\s+Lemma A\.3", out)
    assert re.search(r"coupling_equivalence\s+Theorem 3\.1", out)
    assert len(list_experiments()) >= 14
    assert all(e.anchor for e in REGISTRY.values())


def test_pass_and_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = cli.main(["--experiment", "size_tail", "--replicas", "20000", "--out", str(out)])
    assert code == cli.EXIT_PASS
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# lobtree ")
    assert lines[1] == "experiment,statistic,value,threshold,pass"
    assert all(l.endswith(",true") for l in lines[2:])


def test_fail_exit(tmp_path):
    code = cli.main(["--experiment", "size_tail", "--replicas", "2000", "--threshold", "rel_tol=1e-9",
                     "--out", str(tmp_path / "r.csv")])
    assert code == cli.EXIT_FAIL
    assert ",false" in (tmp_path / "r.csv").read_text()


def test_inconclusive_exit():
    code = cli.main(["--experiment", "density_profile", "--replicas", "10", "--n", "20"])
    assert code == cli.EXIT_INCONCLUSIVE


@pytest.mark.parametrize("argv", [
    ["--experiment", "no_such_thing"],
    ["--experiment", "size_tail", "--replicas", "0"],
    ["--experiment", "size_tail", "--j-pmf", "1:0.5,2:0.5"],
    ["--experiment", "size_tail", "--j-pmf=-1:0.7,1:0.3"],
    ["--experiment", "size_tail", "--lambda", "-1"],
    ["--experiment", "size_tail", "--threshold", "oops"],
    ["--replicas", "10"],
])
def test_config_errors(argv, capsys):
    assert cli.main(argv) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "config error" in err


def test_unknown_lists_catalog(capsys):
    cli.main(["--experiment", "bogus"])
    assert "tail_psi_star" in capsys.readouterr().err


def test_config_file_flags_win(tmp_path):
    conf = tmp_path / "c.cfg"
    conf.write_text("# settings\nexperiment = size_tail\nreplicas = 5\nseed = 3\nthreshold.rel_tol = 0.5\n")
    args = cli.build_parser().parse_args(["--config", str(conf), "--replicas", "7"])
    cfg = cli.make_config(args)
    assert cfg.replicas == 7 and cfg.seed == 3 and cfg.threshold("rel_tol") == 0.5
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert cli.main(["--config", str(bad)]) == cli.EXIT_CONFIG


def test_deterministic_output(tmp_path):
    paths = [tmp_path / f"{i}.csv" for i in range(2)]
    for p in paths:
        cli.main(["--experiment", "mean_killed", "--replicas", "3000", "--seed", "5", "--out", str(p)])
    a, b = (_strip(p.read_text()) for p in paths)
    assert a == b and a.count("\n") >= 2
    cli.main(["--experiment", "mean_killed", "--replicas", "3000", "--seed", "6", "--out", str(paths[1])])
    assert _strip(paths[1].read_text()) != a


def test_json_format(tmp_path):
    p = tmp_path / "r.json"
    cli.main(["--experiment", "contour_visits", "--replicas", "2000", "--format", "json", "--out", str(p)])
    doc = json.loads(p.read_text())
    assert doc["anchor"] == "Eq. (GW)" and doc["verdicts"]
