import json

import pytest
from hypothesis import settings

from knobforge.advisor.prompts import EnvironmentInfo
from knobforge.knobspace import BOOLEAN, ENUM, INTEGER, REAL, ConfigurationSpace, Knob, dump_catalog
from knobforge.scenarios import planted_surface, synthetic_catalog

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def mixed_space():
    return ConfigurationSpace(
        [
            Knob("innodb_compression_failure_threshold_pct", INTEGER, 5, 0, 100, description="compression failure threshold"),
            Knob("innodb_spin_wait_delay", INTEGER, 6, 0, 2**32 - 1, unit="microseconds"),
            Knob("innodb_buffer_pool_size", INTEGER, 134217728, 5242880, 2**36, unit="bytes"),
            Knob("innodb_max_dirty_pages_pct", REAL, 90.0, 0.0, 99.99),
            Knob("innodb_flush_method", ENUM, "fsync", choices=("fsync", "O_DSYNC", "O_DIRECT")),
            Knob("innodb_adaptive_hash_index", BOOLEAN, True),
        ]
    )


@pytest.fixture
def env():
    return EnvironmentInfo("MySQL", "8.0.36", 8, 16 * 2**30, "OLTP", 0.7, 13 * 2**30)


@pytest.fixture
def session_dir(tmp_path):
    """A simulator session with a 10-knob catalog and three planted knobs."""
    space = synthetic_catalog(10, 0)
    dump_catalog(space, tmp_path / "catalog.json")
    (tmp_path / "surface.json").write_text(json.dumps(planted_surface(space, 3, 0).to_json()))
    session = {
        "session_id": "t",
        "catalog": "catalog.json",
        "target": {"simulator": "surface.json"},
        "llm": {"mock": "hill_climb"},
        "budgets": {"vbo": {"max_iterations": 25, "init_points": 5}, "smac": {"max_iterations": 25, "init_points": 5}},
        "output_dir": "runs",
        "seed": 3,
    }
    (tmp_path / "session.json").write_text(json.dumps(session))
    return tmp_path


EXPERT_TOP10 = [
    "innodb_buffer_pool_size",
    "tmp_table_size",
    "max_heap_table_size",
    "innodb_log_file_size",
    "innodb_flush_log_at_trx_commit",
    "query_cache_size",
    "table_open_cache",
    "sort_buffer_size",
    "max_connections",
    "key_buffer_size",
]
LLM_TOP10 = EXPERT_TOP10[:7] + ["innodb_io_capacity", "join_buffer_size", "thread_cache_size"]
SHAP_TOP10 = EXPERT_TOP10[:3] + [
    "innodb_compression_failure_threshold_pct",
    "query_prealloc_size",
    "innodb_thread_concurrency",
    "table_open_cache_instances",
    "sort_buffer_size",
    "innodb_max_dirty_pages_pct_lwm",
    "innodb_purge_threads",
]


@pytest.fixture
def selection_fixture():
    """Expert, LLM and SHAP top-10 selections for a MySQL OLTP workload."""
    from knobforge.pruning import SHAPLEY_SURROGATE, ImportanceRanking

    return (
        ImportanceRanking.from_names(EXPERT_TOP10, label="Expert"),
        ImportanceRanking.from_names(LLM_TOP10, label="LLM"),
        ImportanceRanking.from_names(SHAP_TOP10, method=SHAPLEY_SURROGATE, label="SHAP"),
    )
