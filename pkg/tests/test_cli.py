import json
import os
import subprocess
import sys

import pytest

from menuopt import cli
from menuopt.cli import ConfigError, load_config, parse_config

TINY_TRAIN = """
[experiment]
name = "tiny"

[distribution]
family = "rect"
c1 = 1.0
c2 = 1.0

[buyer]
kind = "additive"

[train]
k = 3
grid_n = 10
iterations = 40
restarts = 1
lambda_start = 200.0
lambda_final = 200.0
ramp = "constant"
trace_every = 10
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_config_defaults():
    cfg = parse_config({"distribution": {"family": "rect"}})
    assert cfg.name == "experiment"
    assert cfg.train.k == 10
    assert cfg.kind.value == "additive"


def test_parse_config_rejects_unknown_section():
    with pytest.raises(ConfigError) as e:
        parse_config({"distro": {}})
    assert "distro" in str(e.value)


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError) as e:
        parse_config({"train": {"learning_rte": 0.1}})
    assert "train.learning_rte" in str(e.value)


def test_parse_config_bad_enum_values():
    with pytest.raises(ConfigError) as e:
        parse_config({"buyer": {"kind": "subadditive"}})
    assert "buyer.kind" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_config({"train": {"mode": "frozen"}})
    assert "train.mode" in str(e.value)


def test_parse_config_triangle_needs_c():
    with pytest.raises(ConfigError):
        parse_config({"distribution": {"family": "triangle"}})


def test_parse_config_oracle_gate():
    # oracle comparison requires a known closed form
    with pytest.raises(ConfigError):
        parse_config({
            "distribution": {"family": "rect", "c2": 1.7},
            "compare": {"oracle": True},
        })
    cfg = parse_config({
        "distribution": {"family": "rect", "c2": 2.0},
        "compare": {"oracle": True},
    })
    assert cfg.compare_oracle


def test_parse_config_duality_needs_triangle():
    with pytest.raises(ConfigError):
        parse_config({"compare": {"duality": True}})


def test_load_config_toml_and_json(tmp_path):
    toml_path = write(tmp_path, "a.toml", TINY_TRAIN)
    cfg = load_config(toml_path)
    assert cfg.train.iterations == 40
    doc = {
        "experiment": {"name": "j"},
        "distribution": {"family": "triangle", "c": 2.0},
        "train": {"k": 3},
    }
    json_path = write(tmp_path, "b.json", json.dumps(doc))
    cfg2 = load_config(json_path)
    assert cfg2.spec.c == 2.0


def test_cli_train_end_to_end(tmp_path):
    cfg = write(tmp_path, "tiny.toml", TINY_TRAIN)
    out = str(tmp_path / "run")
    rc = cli.main(["train", "--config", cfg, "--out", out])
    assert rc == 0
    for fname in ("menu.json", "trace.csv", "report.json", "regions.svg"):
        assert os.path.exists(os.path.join(out, fname)), fname
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["name"] == "tiny"
    assert report["menu_items"] >= 1
    assert 0.0 <= report["grid_revenue"] <= 2.0
    assert report["exact_revenue"] is not None
    trace = open(os.path.join(out, "trace.csv")).read().splitlines()
    assert trace[0] == "iteration,lambda,soft_rev,exact_rev"
    assert len(trace) > 2


def test_cli_train_byte_reproducible(tmp_path):
    cfg = write(tmp_path, "tiny.toml", TINY_TRAIN)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert cli.main(["train", "--config", cfg, "--out", out1]) == 0
    assert cli.main(["train", "--config", cfg, "--out", out2]) == 0
    for fname in ("menu.json", "trace.csv", "report.json", "regions.svg"):
        a = open(os.path.join(out1, fname), "rb").read()
        b = open(os.path.join(out2, fname), "rb").read()
        assert a == b, fname


def test_cli_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, "tiny.toml", TINY_TRAIN)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert cli.main(["train", "--config", cfg, "--out", out1]) == 0
    assert cli.main(["train", "--config", cfg, "--out", out2, "--seed", "7"]) == 0
    a = json.loads(open(os.path.join(out1, "report.json")).read())
    b = json.loads(open(os.path.join(out2, "report.json")).read())
    assert a["best_seed"] == 42 and b["best_seed"] == 7


def test_cli_lp_end_to_end(tmp_path):
    text = TINY_TRAIN + "\n[lp]\ngrid_n = 5\nexport_mps = true\n"
    cfg = write(tmp_path, "lp.toml", text)
    out = str(tmp_path / "lp_run")
    rc = cli.main(["lp", "--config", cfg, "--out", out])
    assert rc == 0
    for fname in ("solution.csv", "lp_menu.json", "report.json", "lp.mps"):
        assert os.path.exists(os.path.join(out, fname)), fname
    report = json.loads(open(os.path.join(out, "report.json")).read())
    assert report["grid_n"] == 5
    assert report["audit"]["max_ic_violation"] <= 1e-6


def test_cli_lp_refuses_big_grid(tmp_path):
    text = TINY_TRAIN + "\n[lp]\ngrid_n = 60\n"
    cfg = write(tmp_path, "lp.toml", text)
    rc = cli.main(["lp", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2


def test_cli_certify_flags(tmp_path):
    out = str(tmp_path / "cert")
    rc = cli.main(["certify", "--c", "2.0", "--quad-n", "1000", "--out", out])
    assert rc == 0
    doc = json.loads(open(os.path.join(out, "certificate.json")).read())
    assert doc["verdict"] == "pass"


def test_cli_certify_rejects_missing_c(tmp_path):
    rc = cli.main(["certify", "--out", str(tmp_path / "cert")])
    assert rc == 2


def test_cli_bench_smoke(tmp_path):
    text = TINY_TRAIN + "\n[bench]\nlp_sizes = [4]\nnn_sizes = [5]\n"
    cfg = write(tmp_path, "bench.toml", text)
    out = str(tmp_path / "bench")
    rc = cli.main(["bench", "--config", cfg, "--out", out])
    assert rc == 0
    rows = open(os.path.join(out, "bench.csv")).read().splitlines()
    assert rows[0] == "method,n,seconds,revenue"
    assert len(rows) == 3


def test_cli_config_error_exit_code(tmp_path):
    cfg = write(tmp_path, "bad.toml", "[distribution]\nfamily = 'dirichlet'\n")
    rc = cli.main(["train", "--config", cfg, "--out", str(tmp_path / "x")])
    assert rc == 2


def test_cli_missing_config_file(tmp_path):
    rc = cli.main(["train", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "x")])
    assert rc == 2


def test_cli_threads_flag_sets_env_before_numpy():
    # subprocess so the env-var ordering is actually observable
    code = (
        "import sys; sys.argv=['menuopt','certify','--c','1.5','--quad-n','200','--threads','1',"
        "'--out','/tmp/menuopt_thread_test'];"
        "from menuopt.cli import main; rc=main(sys.argv[1:]);"
        "import os; print(os.environ.get('OMP_NUM_THREADS')); sys.exit(rc)"
    )
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().splitlines()[-1] == "1"
