import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from ergolab import cli
from ergolab.config import ConfigError, parse_config
from ergolab.experiments import run
from ergolab.report import emit, render, table_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

CLT_IID = """\
experiment = clt
seed = 7
system.kind = iid_rademacher
ensemble.m = 5000
ensemble.n_list = 10000
"""


def test_parse_minimal():
    cfg = parse_config("experiment = clt\nseed = 1\nsystem.kind = doubling\nensemble.m = 10\nensemble.n_list = 10, 100\n")
    assert cfg.experiment == "clt" and cfg.seed == 1 and cfg["ensemble.n_list"] == (10, 100)
    assert cfg.system().kind == "doubling"


def test_parse_range_error_names_field():
    with pytest.raises(ConfigError) as e:
        parse_config("experiment = stable\nseed = 1\nsystem.kind = manneville_pomeau\nsystem.alpha = 1.5\n"
                     "ensemble.m = 10\nensemble.n = 10\n")
    assert any("system.alpha" in p and "line 4" in p for p in e.value.problems)


def test_parse_duplicate_lists_both_lines():
    with pytest.raises(ConfigError) as e:
        parse_config("experiment = clt\nseed = 1\nseed = 2\nsystem.kind = doubling\nensemble.m = 3\nensemble.n = 5\n")
    (p,) = [p for p in e.value.problems if "duplicate" in p]
    assert "line 3" in p and "line 2" in p


def test_parse_collects_all_problems():
    with pytest.raises(ConfigError) as e:
        parse_config("experiment = clt\nsystem.kind = bakers\nensemble.n_list = 5, 3\nbogus = 1\n")
    text = " | ".join(e.value.problems)
    for needle in ("seed: missing", "system.kind", "strictly increasing", "unknown key 'bogus'", "ensemble.m"):
        assert needle in text


def test_report_clt_iid():
    rep = run(parse_config(CLT_IID))
    t = rep.tables["ks"] if "ks" in rep.tables else next(iter(rep.tables.values()))
    assert t.columns[:4] == ["n", "ks_distance", "sigma2_hat", "m"]
    assert t.rows[0][1] <= 0.02
    assert rep.provenance["seed"] == 7


def test_csv_schema_and_header_only():
    files = render(run(parse_config(CLT_IID.replace("5000", "200").replace("10000", "100"))), "csv")
    main = [v for k, v in files.items() if not k.endswith("_meta.csv")][0]
    rows = list(csv.reader(io.StringIO(main)))
    assert rows[0] == ["n", "ks_distance", "sigma2_hat", "m"]
    assert main.endswith("\r\n")
    assert table_csv(["a", "b"], []) == "a,b\r\n"
    assert table_csv(["x"], [["has,comma"]]) == 'x\r\n"has,comma"\r\n'


def test_json_round_trip():
    text = render(run(parse_config(CLT_IID.replace("5000", "200").replace("10000", "100"))), "json")["clt.json"]
    obj = json.loads(text)
    assert json.dumps(obj, indent=2, ensure_ascii=False) + "\n" == text
    assert list(obj)[:2] == ["experiment", "config"] or "experiment" in obj


def test_run_deterministic():
    cfg = parse_config(CLT_IID.replace("5000", "300").replace("10000", "500"))
    assert render(run(cfg), "csv") == render(run(cfg), "csv")


def test_henon_escape_warning():
    cfg = parse_config("experiment = covariance\nseed = 1\nsystem.kind = henon\nsystem.a = 1.45\n"
                       "observable.center = 0\nensemble.m = 200\nensemble.n = 200\nparams.max_lag = 3\n")
    rep = run(cfg)
    assert any(w.startswith("escaped:") for w in rep.warnings)


def _write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, CLT_IID.replace("5000", "100").replace("10000", "100"))
    assert cli.main(["run", "--config", good, "--out", str(tmp_path / "o"), "--format", "csv"]) == 0
    assert (tmp_path / "o" / "clt_meta.csv").exists()
    assert "runtime" in capsys.readouterr().err
    bad = _write(tmp_path, "experiment = clt\n", "bad.cfg")
    assert cli.main(["validate", "--config", bad]) == 2
    assert cli.main(["run", "--config", bad]) == 2
    assert cli.main(["validate", "--config", good]) == 0
    budget = _write(tmp_path, "experiment = erdos_renyi\nseed = 1\nsystem.kind = doubling\n"
                    "observable.kind = sign_threshold\nparams.rate = 0.130812\nparams.k_list = 200\n", "er.cfg")
    assert cli.main(["run", "--config", budget, "--out", str(tmp_path / "o")]) == 3
    zero = _write(tmp_path, "experiment = clt\nseed = 1\nsystem.kind = doubling\nobservable.kind = constant\n"
                  "observable.c = 0\nensemble.m = 50\nensemble.n_list = 10, 20\n", "zero.cfg")
    assert cli.main(["run", "--config", zero, "--out", str(tmp_path / "o")]) == 4
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert "nonconventional" in out and "manneville_pomeau" in out


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ergolab.cli", "validate", "--config", str(CONFIGS / "clt.cfg")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("ok:")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.stem)
def test_example_configs_validate(path):
    parse_config(path.read_text())


def test_emit_unwritable(tmp_path):
    rep = run(parse_config(CLT_IID.replace("5000", "50").replace("10000", "10")))
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        emit(rep, "json", str(blocker / "sub"))
