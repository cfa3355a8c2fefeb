from pathlib import Path

from conftest import model_path, model_source
from simpl.bench import BenchConfig, benchmark, render_table
from simpl.model import parse_model
from simpl.pe import pe
from conftest import algo_program

CELL_FIELDS = {"model", "algo", "mode", "oracle", "n", "estimate", "repetitions",
               "elapsed_ns_mean", "elapsed_ns_median", "elapsed_ns_min",
               "elapsed_ns_max", "spread", "ns_per_sample", "flips",
               "variance_flagged", "error", "speedup_vs_interp",
               "speedup_vs_prev_mode"}


def quick_cfg(tmp_path, **kw):
    defaults = dict(models=[model_path("burglary")], algos=["likelihood"],
                    modes=["interp", "pe", "pe-cache"], repetitions=2,
                    min_seconds=0.02, seed=3, cache_dir=str(tmp_path / "cache"))
    defaults.update(kw)
    return BenchConfig(**defaults)


def test_report_completeness(tmp_path):
    cfg = quick_cfg(tmp_path, algos=["likelihood", "gibbs"])
    cells = benchmark(cfg)
    assert len(cells) == 2 * 3  # algos x modes, one model
    seen = set()
    for c in cells:
        assert CELL_FIELDS <= set(c), CELL_FIELDS - set(c)
        key = (c["model"], c["algo"], c["mode"])
        assert key not in seen
        seen.add(key)
        assert c["error"] is None
        assert c["repetitions"] == 2
        assert c["elapsed_ns_min"] <= c["elapsed_ns_median"] <= c["elapsed_ns_max"]


def test_speedup_columns(tmp_path):
    cells = benchmark(quick_cfg(tmp_path))
    by_mode = {c["mode"]: c for c in cells}
    assert by_mode["interp"]["speedup_vs_interp"] == 1.0
    assert by_mode["pe"]["speedup_vs_interp"] > 1.0  # specialization wins


def test_oracle_cached_on_disk(tmp_path):
    cfg = quick_cfg(tmp_path, modes=["pe"])
    benchmark(cfg)
    cache = Path(cfg.cache_dir) / "oracle.json"
    assert cache.exists()
    before = cache.read_text()
    benchmark(cfg)
    assert cache.read_text() == before


def test_degenerate_cell_reports_error(tmp_path):
    cfg = quick_cfg(tmp_path, models=[model_path("multiburglary")],
                    algos=["rejection"], modes=["pe"])
    (cell,) = benchmark(cfg)
    assert cell["error"] is not None
    assert cell["estimate"] is None


def test_render_table_smoke(tmp_path, capsys):
    cells = benchmark(quick_cfg(tmp_path, modes=["interp", "pe"]))
    render_table(cells)
    err = capsys.readouterr().err
    assert "ns/sample" in err and "likelihood" in err


def test_residual_size_metric_matches_small_structure(tmp_path):
    # MultiBurglary's residual metrics equal a tiny 3-node model's: the
    # statement count depends on structure, never on the 1000-element arrays
    big = parse_model(model_source("multiburglary"))
    small_src = model_source("multiburglary").split("(evidence Alarm (")[0] + \
        "(evidence Alarm (#t #f #f #f #f))\n(query Burglary 0)\n"
    small = parse_model(small_src.replace("1000", "5"))
    prog = algo_program("likelihood")
    rp_big, rp_small = pe(prog, big), pe(prog, small)
    assert rp_big.statement_count() == rp_small.statement_count()
    assert rp_big.loop_count() == rp_small.loop_count()
