"""Config parsing, seed fan-out, runners, and output determinism."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from virovec import (
    ConfigError,
    RandomStream,
    parse_config,
    run_convergence,
    run_extinction,
    run_ide,
    run_persistence,
    run_study,
    seed_for_replicate,
)
from virovec.cli import main as cli_main

BASE = """
schema_version = 1

[domain]
extent = [1.0, 1.0]
plants = [[0.3, 0.5], [0.7, 0.5]]
trait_box = [[0.0, 1.0]]

[rates]
birth = {{ family = "constant", value = 2.0 }}
death = {{ family = "constant", value = 1.0 }}
competition = 1.0
mutation_prob = 0.1
mutation_kernel = {{ family = "gaussian", width = 0.1 }}
load = {{ beta0 = 0.5, r_p = 0.3, half_sat = 1.0 }}
unload = {{ eta0 = 0.4, r_p = 0.3 }}
motion = {{ sigma_u = 0.5, sigma_c = 0.5 }}

[population]
{population}

[scaling]
K = 10
lambda = {lam}

[run]
horizon = {horizon}
sample_dt = 0.25
diffusion_dt = 0.01
seed = 7
replicates = {replicates}

[ide]
space = [8, 8]
trait = 9
{extra}
"""

COUNTS = 'virus_counts = [30, 0]\nvirus_trait = { kind = "uniform" }\nfree_count = 20\ncharged_count = 0'
MASSES = 'virus_masses = [3.0, 0.0]\nvirus_trait = { kind = "uniform" }\nfree_mass = 2.0\ncharged_mass = 0.0'


def write_config(
    tmp_path,
    population=COUNTS,
    lam="1.0",
    horizon="1.0",
    replicates="2",
    extra="",
    name="study.toml",
):
    path = tmp_path / name
    path.write_text(
        BASE.format(
            population=population, lam=lam, horizon=horizon,
            replicates=replicates, extra=extra,
        )
    )
    return path


def test_minimal_config_materializes_defaults(tmp_path):
    cfg = parse_config(write_config(tmp_path))
    assert cfg.kind == "simulate"
    assert cfg.seed == 7
    assert cfg.nbins == 8
    assert cfg.k_list == [10]
    assert cfg.engine == "auto"
    assert cfg.trait_points == 33
    assert cfg.diagnostics == []


def test_lambda_out_of_range_rejected(tmp_path):
    with pytest.raises(ConfigError, match=r"\(0, 1\]"):
        parse_config(write_config(tmp_path, lam="1.5"))


def test_decreasing_K_list_rejected(tmp_path):
    path = write_config(tmp_path, extra='[study]\nkind = "convergence"\nK_list = [100, 50]')
    with pytest.raises(ConfigError, match="strictly increasing"):
        parse_config(path)


def test_unknown_keys_rejected_not_ignored(tmp_path):
    path = write_config(tmp_path, extra="[run2]\nfoo = 1")
    with pytest.raises(ConfigError, match="run2"):
        parse_config(path)
    path = write_config(tmp_path, extra="[persistence]\ntrat_points = 9", name="b.toml")
    with pytest.raises(ConfigError, match="trat_points"):
        parse_config(path)


def test_schema_version_required_and_checked(tmp_path):
    path = tmp_path / "nover.toml"
    path.write_text("[domain]\nextent = [1.0, 1.0]\n")
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(path)
    path = tmp_path / "badver.toml"
    path.write_text("schema_version = 99\n")
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(path)


def test_cli_overrides_beat_file_values(tmp_path):
    cfg = parse_config(
        write_config(tmp_path), seed=123, replicates=5, horizon=2.0,
        out=str(tmp_path / "o"),
    )
    assert cfg.seed == 123
    assert cfg.replicates == 5
    assert cfg.horizon == 2.0
    assert cfg.out_dir == str(tmp_path / "o")


def test_seed_fan_out_distinct_streams():
    draws = set()
    for rep in range(8):
        rng = RandomStream(seed_for_replicate(41, rep))
        draws.add(tuple(rng.take_uniforms(4).tolist()))
    assert len(draws) == 8


def test_rerun_byte_identical(tmp_path):
    path = write_config(tmp_path, replicates="2")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_study(parse_config(path, out=str(out_a)))
    run_study(parse_config(path, out=str(out_b)))
    names = sorted(p.name for p in out_a.iterdir())
    assert names == sorted(p.name for p in out_b.iterdir())
    for name in names:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_trajectory_row_count_and_header(tmp_path):
    path = write_config(tmp_path, horizon="2.0", replicates="1")
    cfg = parse_config(path, out=str(tmp_path / "o"))
    manifest = run_study(cfg)
    rows = {f["name"]: f["rows"] for f in manifest["files"]}
    assert rows["trajectory_0000.csv"] == int(2.0 / 0.25) + 1
    lines = (tmp_path / "o" / "trajectory_0000.csv").read_text().splitlines()
    assert lines[0] == "t,P_v,N_v,N_u,N_c,plant_0,plant_1"
    assert len(lines) == rows["trajectory_0000.csv"] + 1
    first = lines[1].split(",")
    assert first[:5] == ["0", "30", "30", "20", "0"]


def test_manifest_lists_files_and_config_digest(tmp_path):
    path = write_config(tmp_path, replicates="1")
    cfg = parse_config(path, out=str(tmp_path / "o"))
    run_study(cfg)
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config_digest"] == cfg.digest
    assert {f["name"] for f in manifest["files"]} == {
        "trajectory_0000.csv", "histogram_0000.csv",
    }
    assert all(len(f["sha256"]) == 64 and f["rows"] > 0 for f in manifest["files"])
    log = (tmp_path / "o" / "run_log.txt").read_text()
    assert '"schema_version": 1' in log


def test_ide_runner_masses_row_count_matches_grid(tmp_path):
    path = write_config(tmp_path, population=MASSES, horizon="0.5")
    for regime, sub in ((1, "i1"), (2, "i2")):
        cfg = parse_config(path, out=str(tmp_path / sub))
        manifest = run_ide(cfg, regime=regime)
        rows = {f["name"]: f["rows"] for f in manifest["files"]}
        assert rows["ide_masses.csv"] == int(0.5 / 0.25) + 1
        data = np.genfromtxt(
            tmp_path / sub / "ide_masses.csv", delimiter=",", names=True
        )
        total_vectors = data["free"] + data["charged"]
        assert np.allclose(total_vectors, total_vectors[0], rtol=1e-9)


def test_limit_runner_requires_uniform_trait_law(tmp_path):
    fixed = 'virus_masses = [3.0, 0.0]\nvirus_trait = { kind = "fixed", value = [0.5] }\nfree_mass = 2.0'
    cfg = parse_config(write_config(tmp_path, population=fixed), out=str(tmp_path / "o"))
    with pytest.raises(ConfigError, match="uniform"):
        run_ide(cfg, regime=1)


def test_convergence_rejects_count_based_populations(tmp_path):
    path = write_config(
        tmp_path, extra='[study]\nkind = "convergence"\nK_list = [5, 20]'
    )
    cfg = parse_config(path, out=str(tmp_path / "o"))
    with pytest.raises(ConfigError, match="mass"):
        run_convergence(cfg)


def test_convergence_report_sorted_and_conserves_vectors(tmp_path):
    path = write_config(
        tmp_path,
        population=MASSES,
        extra='[study]\nkind = "convergence"\nK_list = [5, 20]',
    )
    cfg = parse_config(path, out=str(tmp_path / "o"), replicates=3)
    manifest, report = run_convergence(cfg)
    assert report.k_list == [5, 20]
    assert all(g >= 0 for g in report.gap_virus_total)
    names = {f["name"] for f in manifest["files"]}
    assert {"convergence_K5.csv", "convergence_K20.csv",
            "convergence_summary.csv", "ide_reference.csv"} <= names
    # conservation survives normalization: vector_total is exactly constant
    # and equals the configured initial mass (free_mass + charged_mass = 2)
    for k_val in (5, 20):
        data = np.genfromtxt(
            tmp_path / "o" / f"convergence_K{k_val}.csv", delimiter=",", names=True
        )
        total = data["vector_total"]
        assert np.all(total == total[0])
        assert total[0] == pytest.approx(2.0)


def test_extinction_runner_counts_and_bound(tmp_path):
    # strongly subcritical pure birth-death: b=2 < d=4 and no loading, so no
    # virus can ride out the horizon inside a vector
    text = BASE.format(
        population=COUNTS, lam="1.0", horizon="6.0", replicates="8", extra=""
    ).replace('death = { family = "constant", value = 1.0 }',
              'death = { family = "constant", value = 4.0 }'
    ).replace("beta0 = 0.5", "beta0 = 0.0")
    path = tmp_path / "sub.toml"
    path.write_text(text)
    cfg = parse_config(path, kind="extinction", out=str(tmp_path / "o"))
    manifest, res = run_extinction(cfg)
    assert res.n_extinct == 8  # b=2 < d=4, tiny population dies fast
    curve = np.genfromtxt(tmp_path / "o" / "extinction_curve.csv",
                          delimiter=",", names=True)
    assert np.all(np.diff(curve["fraction"]) >= 0)
    assert curve["fraction"][-1] == 1.0
    mean = np.genfromtxt(tmp_path / "o" / "extinction_mean_pv.csv",
                         delimiter=",", names=True)
    assert np.all(mean["mean_mass"] <= mean["mass_bound"] + 1e-12)


def test_persistence_runner_table_and_summary(tmp_path):
    cfg = parse_config(
        write_config(tmp_path, extra='[persistence]\ntrait_points = 5'),
        kind="persistence", out=str(tmp_path / "o"),
    )
    manifest, summary = run_persistence(cfg)
    table = np.genfromtxt(tmp_path / "o" / "persistence_R.csv",
                          delimiter=",", names=True)
    assert table.shape[0] == 2 * 5  # plants x trait nodes
    assert summary["R_max"] == pytest.approx(np.max(table["R"]))
    assert summary["R_min"] == pytest.approx(np.min(table["R"]))


def test_cli_exit_codes(tmp_path):
    runner = CliRunner()
    path = write_config(tmp_path, replicates="1")
    ok = runner.invoke(
        cli_main, ["simulate", "--config", str(path), "--out", str(tmp_path / "o")]
    )
    assert ok.exit_code == 0, ok.output
    bad = runner.invoke(
        cli_main,
        ["simulate", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o2")],
    )
    assert bad.exit_code == 2
    badlam = write_config(tmp_path, lam="1.5", name="badlam.toml")
    out = runner.invoke(
        cli_main, ["simulate", "--config", str(badlam), "--out", str(tmp_path / "o3")]
    )
    assert out.exit_code == 2


def test_floats_serialized_at_17_significant_digits(tmp_path):
    path = write_config(tmp_path, population=MASSES, horizon="0.5")
    cfg = parse_config(path, out=str(tmp_path / "o"))
    run_ide(cfg, regime=1)
    body = (tmp_path / "o" / "ide_masses.csv").read_text().splitlines()[1:]
    values = [float(tok) for line in body for tok in line.split(",")]
    rendered = [format(v, ".17g") for v in values]
    for tok, v in zip(rendered, values):
        assert float(tok) == v  # round-trip exact
