"""Command-line surface tests: every subcommand through cli.run with exit codes."""

import json

import pytest
import yaml

from asymdiff import model as M
from asymdiff.cli import run
from asymdiff.metrics import CSV_COLUMNS, relaimpr

SYNTH = dict(n_users=20, n_items=8, context_vocab_sizes=[5, 5], n_train=300,
             n_eval=150, seed=5)
MODEL = dict(embed_dim=4, cross_layers=1, hidden_sizes=[16], latent_dim=8,
             denoiser_hidden=16)
TRAIN = dict(batch_size=64, epochs=3, lr=3e-3, log_every=0)


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return str(path)


def train_config(arm, **over):
    doc = {"data": {"synth": dict(SYNTH)}, "model": dict(MODEL),
           "train": dict(TRAIN), "arm": arm, "seed": 0}
    doc.update(over)
    return doc


def read_log(out_dir):
    lines = (out_dir / "run_log.jsonl").read_text(encoding="utf-8").splitlines()
    return [json.loads(l) for l in lines]


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def data_dir(ws):
    spec = write_yaml(ws / "spec.yaml", SYNTH)
    out = ws / "data"
    assert run(["gen-data", "--spec", spec, "--out-dir", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def base_run(ws):
    cfg = write_yaml(ws / "base.yaml", train_config("base"))
    out = ws / "base"
    assert run(["train", "--config", cfg, "--out-dir", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def asym_run(ws):
    cfg = write_yaml(ws / "asym.yaml",
                     train_config({"name": "asymdiff", "lambda_recon": 0.1}))
    out = ws / "asym"
    assert run(["train", "--config", cfg, "--out-dir", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def sweep_dir(ws):
    doc = {
        "synth": dict(SYNTH),
        "arms": ["base", {"name": "asymdiff", "lambda_recon": 0.1},
                 {"name": "gauss_diff", "lambda_recon": 0.5, "schedule": {"n_steps": 3}}],
        "seeds": [0, 1],
        "rhos": [0.0, 0.2],
        "model": dict(MODEL),
        "train": dict(TRAIN, epochs=1),
    }
    cfg = write_yaml(ws / "ablate.yaml", doc)
    out = ws / "sweep"
    assert run(["ablate", "--config", cfg, "--out-dir", str(out)]) == 0
    return out


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def test_gen_data_writes_expected_files(data_dir):
    for name in ("train.csv", "eval.csv", "dataset.json", "resolved_config.json"):
        assert (data_dir / name).exists(), name
    train_lines = (data_dir / "train.csv").read_text(encoding="utf-8").splitlines()
    assert train_lines[0].startswith("#")
    assert train_lines[1].startswith("label,user_id,")
    assert len(train_lines) == 2 + SYNTH["n_train"]
    eval_lines = (data_dir / "eval.csv").read_text(encoding="utf-8").splitlines()
    assert len(eval_lines) == 2 + SYNTH["n_eval"]
    doc = json.loads((data_dir / "dataset.json").read_text(encoding="utf-8"))
    assert 0.5 < doc["oracle_auc"] <= 1.0
    assert doc["config_hash"] == json.loads(
        (data_dir / "resolved_config.json").read_text(encoding="utf-8"))["config_hash"]


def test_gen_data_reruns_byte_identically(ws, data_dir):
    spec = write_yaml(ws / "spec_again.yaml", SYNTH)
    out = ws / "data_again"
    assert run(["gen-data", "--spec", spec, "--out-dir", str(out)]) == 0
    for name in ("train.csv", "eval.csv", "dataset.json"):
        assert (out / name).read_bytes() == (data_dir / name).read_bytes(), name


def test_gen_data_seed_override_changes_the_data(ws, data_dir):
    spec = write_yaml(ws / "spec_seed.yaml", SYNTH)
    out = ws / "data_seed"
    assert run(["gen-data", "--spec", spec, "--out-dir", str(out), "--seed", "6"]) == 0
    assert (out / "train.csv").read_bytes() != (data_dir / "train.csv").read_bytes()


def test_gen_data_rejects_bad_missingness_rate(ws, capsys):
    spec = write_yaml(ws / "bad_rho.yaml", dict(SYNTH, rho=1.5))
    assert run(["gen-data", "--spec", spec, "--out-dir", str(ws / "nope")]) == 1
    assert "rho" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def test_train_writes_checkpoint_log_and_config(base_run):
    for name in ("checkpoint.bin", "run_log.jsonl", "resolved_config.json"):
        assert (base_run / name).exists(), name
    params, opt, meta = M.load_checkpoint(base_run / "checkpoint.bin")
    assert meta["arm"] == "base"
    assert meta["serving_path"] == "base_predict"
    assert meta["step"] == 15  # ceil(300/64) = 5 batches x 3 epochs
    assert opt.t == 15
    events = [l["event"] for l in read_log(base_run)]
    assert events == ["start", "epoch", "epoch", "epoch", "final_eval"]


def test_train_learns_better_than_chance(asym_run):
    final = read_log(asym_run)[-1]
    assert final["event"] == "final_eval"
    assert final["auc"] > 0.5
    assert final["uauc"] > 0.5


def test_train_reruns_byte_identically(ws, base_run):
    cfg = write_yaml(ws / "base2.yaml", train_config("base"))
    out = ws / "base2"
    assert run(["train", "--config", cfg, "--out-dir", str(out)]) == 0
    assert (out / "checkpoint.bin").read_bytes() == (base_run / "checkpoint.bin").read_bytes()
    assert (out / "run_log.jsonl").read_bytes() == (base_run / "run_log.jsonl").read_bytes()


def test_train_resume_continues_the_step_counter(ws, base_run):
    cfg = write_yaml(ws / "resume.yaml", train_config("base"))
    out = ws / "resumed"
    assert run(["train", "--config", cfg, "--out-dir", str(out),
                "--resume", str(base_run / "checkpoint.bin")]) == 0
    _, _, meta = M.load_checkpoint(out / "checkpoint.bin")
    assert meta["step"] == 30


def test_train_rejects_unknown_config_sections(ws, capsys):
    cfg = write_yaml(ws / "typo.yaml", dict(train_config("base"), trian=dict(TRAIN)))
    assert run(["train", "--config", cfg, "--out-dir", str(ws / "nope")]) == 1
    assert "trian" in capsys.readouterr().err


def test_train_rejects_loss_weights_in_the_model_block(ws, capsys):
    doc = train_config("asymdiff")
    doc["model"] = dict(MODEL, lambda_recon=0.5)
    cfg = write_yaml(ws / "weights.yaml", doc)
    assert run(["train", "--config", cfg, "--out-dir", str(ws / "nope")]) == 1
    assert "arm block" in capsys.readouterr().err


def test_invalid_yaml_is_a_config_error(ws):
    bad = ws / "broken.yaml"
    bad.write_text("a: [unclosed\n", encoding="utf-8")
    assert run(["train", "--config", str(bad), "--out-dir", str(ws / "nope")]) == 1


def test_missing_config_file_is_a_data_error(ws):
    assert run(["train", "--config", str(ws / "absent.yaml"),
                "--out-dir", str(ws / "nope")]) == 2


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def test_evaluate_writes_a_report(ws, asym_run, data_dir, capsys):
    out = ws / "asym_report.json"
    code = run(["evaluate", "--checkpoint", str(asym_run / "checkpoint.bin"),
                "--data", str(data_dir / "eval.csv"),
                "--sidecar", str(data_dir / "dataset.json"), "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["arm"] == "asymdiff"
    assert report["serving_path"] == "serve_predict"
    assert 0.0 < report["auc"] < 1.0
    assert report["n_examples"] == SYNTH["n_eval"]
    sidecar = json.loads((data_dir / "dataset.json").read_text(encoding="utf-8"))
    assert report["oracle_auc"] == sidecar["oracle_auc"]
    assert (ws / "asym_report.json.config.json").exists()
    assert json.loads(capsys.readouterr().out) == report


def test_evaluate_fills_relaimpr_against_a_baseline(ws, base_run, asym_run, data_dir):
    base_out = ws / "base_report.json"
    assert run(["evaluate", "--checkpoint", str(base_run / "checkpoint.bin"),
                "--data", str(data_dir / "eval.csv"), "--out", str(base_out)]) == 0
    out = ws / "asym_vs_base.json"
    assert run(["evaluate", "--checkpoint", str(asym_run / "checkpoint.bin"),
                "--data", str(data_dir / "eval.csv"),
                "--baseline", str(base_out), "--out", str(out)]) == 0
    base_rep = json.loads(base_out.read_text(encoding="utf-8"))
    report = json.loads(out.read_text(encoding="utf-8"))
    want = relaimpr(report["auc"], base_rep["auc"])
    assert report["relaimpr"]["base"]["auc"] == pytest.approx(want, abs=1e-9)
    assert "uauc" in report["relaimpr"]["base"]


def test_evaluate_serving_override(ws, asym_run, data_dir, capsys):
    code = run(["evaluate", "--checkpoint", str(asym_run / "checkpoint.bin"),
                "--data", str(data_dir / "eval.csv"), "--serving", "base"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["serving_path"] == "base_predict"


def test_evaluate_missing_checkpoint_is_a_data_error(ws, data_dir):
    assert run(["evaluate", "--checkpoint", str(ws / "absent.bin"),
                "--data", str(data_dir / "eval.csv")]) == 2


def test_evaluate_rejects_mismatched_schema(ws, asym_run):
    spec = write_yaml(ws / "wide.yaml", dict(SYNTH, context_vocab_sizes=[5, 5, 5]))
    wide = ws / "wide_data"
    assert run(["gen-data", "--spec", spec, "--out-dir", str(wide)]) == 0
    assert run(["evaluate", "--checkpoint", str(asym_run / "checkpoint.bin"),
                "--data", str(wide / "eval.csv")]) == 2


# ---------------------------------------------------------------------------
# ablate + report
# ---------------------------------------------------------------------------


def test_ablate_writes_the_full_grid(sweep_dir):
    lines = (sweep_dir / "sweep.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == ",".join(CSV_COLUMNS)
    rows = [dict(zip(CSV_COLUMNS, l.split(","))) for l in lines[2:]]
    assert len(rows) == 3 * 2 * 2  # arms x seeds x rhos
    key = [(r["arm"], int(r["seed"]), float(r["rho"])) for r in rows]
    assert key == sorted(key)
    assert {r["arm"] for r in rows} == {"base", "asymdiff", "gauss_diff"}
    assert len({r["config_hash"] for r in rows}) == 1
    assert all(r["oracle_auc"] for r in rows)
    assert all(0.0 <= float(r["auc"]) <= 1.0 for r in rows)
    by_arm = {r["arm"]: r["serving_path"] for r in rows}
    assert by_arm["base"] == "base_predict"
    assert by_arm["asymdiff"] == "serve_predict"
    assert by_arm["gauss_diff"] == "base_predict"


def test_ablate_rejects_duplicate_arms(ws):
    doc = {"synth": dict(SYNTH), "arms": ["base", "base"], "seeds": [0],
           "model": dict(MODEL), "train": dict(TRAIN, epochs=1)}
    cfg = write_yaml(ws / "dupes.yaml", doc)
    assert run(["ablate", "--config", cfg, "--out-dir", str(ws / "nope")]) == 1


def test_report_renders_summary_and_plots(ws, sweep_dir):
    out = ws / "report"
    assert run(["report", "--sweep", str(sweep_dir / "sweep.csv"),
                "--out-dir", str(out)]) == 0
    summary = (out / "summary.md").read_text(encoding="utf-8")
    assert "| base |" in summary and "| asymdiff |" in summary
    assert "rho=0.0" in summary and "rho=0.2" in summary
    assert "seed 0" in summary and "seed 1" in summary
    assert (out / "auc_by_arm.png").stat().st_size > 0
    assert (out / "uauc_vs_rho.png").stat().st_size > 0


def test_report_is_deterministic(ws, sweep_dir):
    a, b = ws / "report_a", ws / "report_b"
    for out in (a, b):
        assert run(["report", "--sweep", str(sweep_dir / "sweep.csv"),
                    "--out-dir", str(out)]) == 0
    for name in ("summary.md", "auc_by_arm.png", "uauc_vs_rho.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_report_rejects_empty_sweep(ws):
    empty = ws / "empty.csv"
    empty.write_text("# config_hash=x\n", encoding="utf-8")
    assert run(["report", "--sweep", str(empty), "--out-dir", str(ws / "nope")]) == 2


def test_report_rejects_malformed_rows(ws):
    bad = ws / "bad.csv"
    bad.write_text(",".join(CSV_COLUMNS) + "\nbase,zero,,x,y,z,0,0,0,,,,,,\n",
                   encoding="utf-8")
    assert run(["report", "--sweep", str(bad), "--out-dir", str(ws / "nope")]) == 2


# ---------------------------------------------------------------------------
# bench and misuse
# ---------------------------------------------------------------------------


def test_bench_emits_overhead_json(capsys):
    code = run(["bench", "--samples", "20", "--repeats", "3",
                "--latent-dim", "16", "--denoiser-hidden", "16"])
    assert code == 0
    res = json.loads(capsys.readouterr().out)
    assert res["n_samples"] == 20
    assert res["base_ms_per_call"] > 0
    assert res["serve_ms_per_call"] > 0
    assert "overhead_pct" in res and "config_hash" in res


def test_cli_misuse_exit_codes():
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["--help"]) == 0
    assert run(["train"]) == 1  # missing required --config
