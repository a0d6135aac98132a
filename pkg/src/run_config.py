"""
This module compiles the configuration of a run into dataclass objects.
- ConfigReader: loads the packaged JSON settings (tilings, analysis defaults, output names)
- RunConfig: compiles and validates a user run descriptor for one CLI subcommand

The run descriptor is a JSON file with the keys documented in docs/architecture.md, e.g.
{"subcommand": "contract", "p": 3, "q": 7, "n": 2, "chi_bulk": 2, "bulk": {"a": 0.6}, "seed": 7}

Dependencies:
- utils.py: contains the JsonReader class
- tiling_config.json, analysis_config.json, output_mapping.json
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional
import logging
import os

from src.utils import JsonReader
from src.exceptions import ConfigurationError

SUBCOMMANDS = ("tile", "contract", "disorder", "mqa_fit", "spectrum", "fidelity_sweep", "parent_fit", "excite")

# =============================================================================
# Packaged settings
# =============================================================================
class ConfigReader:
    def __init__(self):
        self.tiling_config = JsonReader("tiling_config.json")
        self.letter_tags = self.tiling_config.extract("letter_tags")
        self.tilings = self.tiling_config.extract("tilings")
        self.sequence_rules = self.tiling_config.extract("sequence_rules")
        self.schema_version = self.tiling_config.extract("schema_version")

        self.analysis_config = JsonReader("analysis_config.json")
        self.tolerances = self.analysis_config.extract("tolerances")
        self.oracle = self.analysis_config.extract("oracle")
        self.decay = self.analysis_config.extract("decay")
        self.disorder = self.analysis_config.extract("disorder")
        self.network = self.analysis_config.extract("network")
        self.mqa = self.analysis_config.extract("mqa")
        self.parent = self.analysis_config.extract("parent")
        self.excite = self.analysis_config.extract("excite")
        self.runtime = self.analysis_config.extract("runtime")

        self.output_mapping = JsonReader("output_mapping.json")

    def tiling(self, p: int, q: int) -> Optional[Dict]:
        return self.tilings.get(f"{p},{q}")

    def outputs(self, subcommand: str) -> Dict[str, str]:
        return self.output_mapping.extract(subcommand)


@lru_cache(maxsize=1)
def settings() -> ConfigReader:
    return ConfigReader()


# =============================================================================
# Compile run descriptor
# =============================================================================
@dataclass
class AnalysisOptions:
    d_min: Optional[int] = None
    band: Optional[int] = None
    subsystem_length: Optional[int] = None
    chi_values: List[int] = field(default_factory=lambda: [2, 4, 8])
    n_values: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    a0_grid: Optional[List[float]] = None
    a1_grid: Optional[List[float]] = None
    targets: List[str] = field(default_factory=lambda: ["E1"])


@dataclass
class RunConfig:
    """
    Class to compile a run descriptor (dict loaded from JSON) into validated settings.
    Every violated precondition is collected before a single ConfigurationError is raised.
    :param descriptor: dictionary with the run settings
    :param out: output directory override (flag)
    :param seed: seed override (flag)
    :param threads: thread count override (flag)
    :param svg: whether SVG figures are emitted

    Example Usage:
    run = RunConfig({"subcommand": "tile", "p": 3, "q": 7, "n": 2})
    run.p, run.output_folder
    """
    descriptor: Dict[str, Any]
    out: Optional[str] = None
    seed: Optional[int] = None
    threads: Optional[int] = None
    svg: bool = True

    def __post_init__(self):
        self.settings = settings()
        self.violations: List[str] = []
        self._compile_geometry()
        self._compile_bulk()
        self._compile_runtime()
        self._compile_analysis()
        if self.violations:
            for violation in self.violations:
                logging.error(f"Invalid run configuration: {violation}")
            raise ConfigurationError(self.violations)

    def _compile_geometry(self):
        d = self.descriptor
        self.subcommand = str(d.get("subcommand", "")).replace("-", "_")
        if self.subcommand not in SUBCOMMANDS:
            self.violations.append(f"subcommand must be one of {', '.join(SUBCOMMANDS)}, got '{self.subcommand}'")
        self.p = d.get("p", 3)
        self.q = d.get("q", 7)
        self.n = d.get("n", 2)
        for name in ("p", "q", "n"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                self.violations.append(f"{name} must be an integer, got {value!r}")
        if isinstance(self.p, int) and isinstance(self.q, int):
            if self.p < 3 or self.q < 3 or self.p * self.q <= 2 * (self.p + self.q):
                self.violations.append(f"{{{self.p},{self.q}}} is not hyperbolic (pq must exceed 2(p+q))")
        if isinstance(self.n, int) and self.n < 0:
            self.violations.append("n must be non-negative")
        self.tiling_entry = self.settings.tiling(self.p, self.q) if isinstance(self.p, int) and isinstance(self.q, int) else None
        if self.subcommand not in ("tile", "") and self.tiling_entry is None and not self.violations:
            self.violations.append(f"no tensor/MQA settings for {{{self.p},{self.q}}}; supported: {sorted(self.settings.tilings)}")

    def _compile_bulk(self):
        d = self.descriptor
        self.chi_bulk = d.get("chi_bulk", 2)
        if self.chi_bulk not in (2, 4, 8, 16):
            self.violations.append(f"chi_bulk must be a power of 2 between 2 and 16, got {self.chi_bulk!r}")
        self.k = {2: 1, 4: 2, 8: 3, 16: 4}.get(self.chi_bulk, 1)
        bulk = d.get("bulk", "optimize")
        self.optimize = bulk == "optimize"
        self.bulk: Dict[str, Any] = {} if self.optimize else bulk
        if not self.optimize:
            if not isinstance(bulk, dict):
                self.violations.append("bulk must be 'optimize' or an object of tile parameters")
            else:
                names = (self.tiling_entry or {}).get("tile_parameters", ["a"])
                if self.chi_bulk == 2:
                    for name in names:
                        if not isinstance(bulk.get(name), (int, float)):
                            self.violations.append(f"bulk parameter '{name}' must be a real number")
                else:
                    if not isinstance(bulk.get("params"), list):
                        self.violations.append("chi_bulk > 2 needs a 'params' list (bulk orbits followed by cap orbits)")
        self.target = d.get("target", "ising")
        if self.target not in ("ising", "zero"):
            self.violations.append(f"target must be 'ising' or 'zero', got {self.target!r}")

    def _compile_runtime(self):
        runtime = self.settings.runtime
        self.seed = self.seed if self.seed is not None else self.descriptor.get("seed", 0)
        if not isinstance(self.seed, int):
            self.violations.append(f"seed must be an integer, got {self.seed!r}")
        env_threads = os.environ.get("HYPERBOLIC_MTN_THREADS")
        if self.threads is not None:
            threads = self.threads
        elif env_threads:
            threads = int(env_threads) if env_threads.strip().isdigit() else env_threads
        else:
            threads = self.descriptor.get("threads", 1)
        if not isinstance(threads, int) or threads < 1:
            self.violations.append(f"threads must be a positive integer, got {threads!r}")
            threads = 1
        self.threads = min(threads, runtime["max_threads"])
        self.output_folder = self.out or os.environ.get("HYPERBOLIC_MTN_OUT") or self.descriptor.get("out", "output")
        self.log_level = self.descriptor.get("log_level", runtime["log_level"])
        self.schedule = self.descriptor.get("schedule", self.settings.network["default_schedule"])
        if self.schedule not in ("layer_ccw", "layer_cw"):
            self.violations.append(f"schedule must be 'layer_ccw' or 'layer_cw', got {self.schedule!r}")

    def _compile_analysis(self):
        options = self.descriptor.get("analysis", {})
        if not isinstance(options, dict):
            self.violations.append("analysis must be an object")
            options = {}
        known = set(AnalysisOptions.__dataclass_fields__)
        unknown = sorted(set(options) - known)
        if unknown:
            self.violations.append(f"unknown analysis options: {', '.join(unknown)}")
        self.analysis = AnalysisOptions(**{k: v for k, v in options.items() if k in known})
        if not isinstance(self.analysis.chi_values, list) or any(c not in (2, 4, 8) for c in self.analysis.chi_values):
            self.violations.append("analysis.chi_values may only contain 2, 4 and 8")
        if not isinstance(self.analysis.n_values, list) or any((not isinstance(n, int)) or n < 1 for n in self.analysis.n_values):
            self.violations.append("analysis.n_values must be positive integers")
        length = self.analysis.subsystem_length
        if length is not None and (not isinstance(length, int) or isinstance(length, bool) or length < 1):
            self.violations.append("analysis.subsystem_length must be a positive integer")
        for grid_name in ("a0_grid", "a1_grid"):
            grid = getattr(self.analysis, grid_name)
            if grid is None:
                continue
            if (not isinstance(grid, list) or len(grid) != 3
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in grid)
                    or grid[2] <= 0 or grid[1] <= grid[0]):
                self.violations.append(f"analysis.{grid_name} must be [start, stop, positive step] with stop > start")
        if self.subcommand in ("mqa_fit", "disorder", "parent_fit", "excite") and self.tiling_entry is not None:
            if self.subcommand == "excite" and (self.p, self.q) != (3, 7):
                self.violations.append("excite runs are defined for the {3,7} tiling")
            if self.subcommand in ("mqa_fit", "disorder") and isinstance(self.n, int) and self.n < 1:
                self.violations.append(f"{self.subcommand} needs n >= 1")

    @property
    def echo(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "p": self.p,
            "q": self.q,
            "n": self.n,
            "chi_bulk": self.chi_bulk,
            "bulk": "optimize" if self.optimize else self.bulk,
            "target": self.target,
            "seed": self.seed,
            "threads": self.threads,
            "schedule": self.schedule,
            "analysis": vars(self.analysis),
        }
