"""
This module contains utilities for reading and writing the files produced by a run.
Each utility handles a specific format:
- JsonReader: reads the JSON configuration shipped with the package (or any JSON file)
- JsonWriter: writes summaries and descriptors with a stable layout
- CSVWriter: writes tables and matrices through pandas
- SVGWriter: writes line plots and heatmaps with lxml
- ManifestWriter: records checksums, package versions and step status of a run

A DataUtilities class collects small array helpers shared by the analysis modules.

Dependencies:
- pandas, numpy, lxml, packaging
"""

from typing import Dict, List, Optional, Sequence
import os
import json
import time
import hashlib
import logging
from importlib import metadata

import numpy as np
import pandas as pd
from lxml import etree
from packaging.version import Version, InvalidVersion

# =============================================================================
# File Reading Utilities
# =============================================================================
# ----------------------------------------------------------------------------
# Read .json file
# ----------------------------------------------------------------------------
class JsonReader:
    def __init__(self, filename: str):
        """
        Initializes the JsonReader with a JSON file.
        Relative names are resolved against the package directory, so the configuration
        files next to the modules are found from any working directory.
        :param filename: name of a packaged JSON file or a path to any JSON file
        """
        if os.path.isabs(filename) or os.path.exists(filename):
            self.filepath = filename
        else:
            dir_path = os.path.dirname(os.path.realpath(__file__))
            self.filepath = os.path.join(dir_path, filename)
        try:
            self.data = self._load_json_file()
        except Exception as e:
            logging.error(f"Failed to initialize JSON file '{self.filepath}': {e}")
            raise FileNotFoundError(f"JSON file '{self.filepath}' not found or unreadable")

    def _load_json_file(self):
        with open(self.filepath, 'r') as file:
            return json.load(file)

    def extract(self, key: str):
        try:
            return self.data[key]
        except KeyError:
            logging.error(f"Key '{key}' missing in '{self.filepath}'")
            raise

    def get(self, key: str, default=None):
        return self.data.get(key, default)


# =============================================================================
# File Writing Utilities
# =============================================================================
# ----------------------------------------------------------------------------
# Write .json file
# ----------------------------------------------------------------------------
class JsonWriter:
    def __init__(self, output_filepath: str):
        self.output_filepath = output_filepath

    @staticmethod
    def to_builtin(value):
        """
        Converts numpy scalars/arrays and dataclass-like containers into JSON-ready values.
        """
        if isinstance(value, dict):
            return {str(k): JsonWriter.to_builtin(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [JsonWriter.to_builtin(v) for v in value]
        if isinstance(value, np.ndarray):
            return JsonWriter.to_builtin(value.tolist())
        if isinstance(value, np.generic):
            return JsonWriter.to_builtin(value.item())
        if isinstance(value, float) and not np.isfinite(value):
            return None
        return value

    def write(self, payload: Dict):
        try:
            _ensure_directory(self.output_filepath)
            with open(self.output_filepath, 'w') as file:
                json.dump(self.to_builtin(payload), file, indent=2, sort_keys=True)
                file.write("\n")
        except Exception as e:
            logging.error(f"Failed to write to '{self.output_filepath}': {e}")
            raise


# ----------------------------------------------------------------------------
# Write .csv file
# ----------------------------------------------------------------------------
class CSVWriter:
    float_format = "%.12g"

    def __init__(self, output_filepath: str):
        self.output_filepath = output_filepath

    def write_table(self, table: Dict[str, Sequence]):
        """
        Writes a column dictionary; every column must have the same length.
        """
        self.write_df(pd.DataFrame(table))

    def write_matrix(self, matrix: np.ndarray):
        """
        Writes a dense matrix, one CSV row per matrix row, without header or index.
        """
        try:
            _ensure_directory(self.output_filepath)
            pd.DataFrame(np.asarray(matrix)).to_csv(
                self.output_filepath, header=False, index=False, float_format=self.float_format
            )
        except Exception as e:
            logging.error(f"Failed to write to '{self.output_filepath}': {e}")
            raise

    def write_df(self, df: pd.DataFrame):
        try:
            _ensure_directory(self.output_filepath)
            df.to_csv(self.output_filepath, index=False, float_format=self.float_format)
        except Exception as e:
            logging.error(f"Failed to write to '{self.output_filepath}': {e}")
            raise


# ----------------------------------------------------------------------------
# Write .svg file
# ----------------------------------------------------------------------------
class SVGWriter:
    """
    Minimal SVG figure writer for line plots and heatmaps.

    Example Usage:
    SVGWriter(width=640, height=400).line_plot({"MDI": (x, y)}, "spectrum.svg", title="Spectrum")
    """
    namespace = "http://www.w3.org/2000/svg"
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

    def __init__(self, width: int = 640, height: int = 420, margin: int = 50):
        self.width = width
        self.height = height
        self.margin = margin

    def _root(self, title: str):
        root = etree.Element("svg", nsmap={None: self.namespace})
        root.set("width", str(self.width))
        root.set("height", str(self.height))
        root.set("viewBox", f"0 0 {self.width} {self.height}")
        etree.SubElement(root, "rect", x="0", y="0", width=str(self.width), height=str(self.height), fill="white")
        label = etree.SubElement(root, "text", x=str(self.width // 2), y=str(self.margin // 2))
        label.set("text-anchor", "middle")
        label.text = title
        return root

    def _write(self, root, output_filepath: str):
        try:
            _ensure_directory(output_filepath)
            with open(output_filepath, 'wb') as file:
                file.write(etree.tostring(root, pretty_print=True, xml_declaration=True, encoding="UTF-8"))
        except Exception as e:
            logging.error(f"Failed to write to '{output_filepath}': {e}")
            raise

    def line_plot(self, series: Dict[str, tuple], output_filepath: str, title: str = "",
                  xlabel: str = "", ylabel: str = "", logx: bool = False, logy: bool = False):
        root = self._root(title)
        xs, ys = [], []
        for x, y in series.values():
            x, y = self._transform(np.asarray(x, float), np.asarray(y, float), logx, logy)
            xs.append(x)
            ys.append(y)
        if not xs or all(x.size == 0 for x in xs):
            self._write(root, output_filepath)
            return
        x_all, y_all = np.concatenate(xs), np.concatenate(ys)
        x_lo, x_hi = float(np.min(x_all)), float(np.max(x_all))
        y_lo, y_hi = float(np.min(y_all)), float(np.max(y_all))
        x_span = x_hi - x_lo or 1.0
        y_span = y_hi - y_lo or 1.0
        inner_w = self.width - 2 * self.margin
        inner_h = self.height - 2 * self.margin

        axes = etree.SubElement(root, "g", stroke="black")
        etree.SubElement(axes, "line", x1=str(self.margin), y1=str(self.height - self.margin),
                         x2=str(self.width - self.margin), y2=str(self.height - self.margin))
        etree.SubElement(axes, "line", x1=str(self.margin), y1=str(self.margin),
                         x2=str(self.margin), y2=str(self.height - self.margin))
        etree.SubElement(root, "text", x=str(self.width // 2), y=str(self.height - 10)).text = xlabel
        etree.SubElement(root, "text", x="5", y=str(self.height // 2)).text = ylabel

        for index, ((name, _), x, y) in enumerate(zip(series.items(), xs, ys)):
            colour = self.palette[index % len(self.palette)]
            px = self.margin + (x - x_lo) / x_span * inner_w
            py = self.height - self.margin - (y - y_lo) / y_span * inner_h
            points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
            etree.SubElement(root, "polyline", points=points, fill="none", stroke=colour)
            legend = etree.SubElement(root, "text", x=str(self.width - self.margin - 120),
                                      y=str(self.margin + 15 * (index + 1)), fill=colour)
            legend.text = name
        self._write(root, output_filepath)

    def heatmap(self, matrix: np.ndarray, output_filepath: str, title: str = "", clip: Optional[float] = None):
        root = self._root(title)
        matrix = np.asarray(matrix, float)
        size = max(matrix.shape)
        cell = (min(self.width, self.height) - 2 * self.margin) / max(size, 1)
        scale = clip if clip is not None else (float(np.max(np.abs(matrix))) or 1.0)
        grid = etree.SubElement(root, "g")
        for (row, col), value in np.ndenumerate(matrix):
            if value == 0:
                continue
            level = float(np.clip(value / scale, -1.0, 1.0))
            shade = int(255 * (1 - abs(level)))
            colour = f"rgb(255,{shade},{shade})" if level > 0 else f"rgb({shade},{shade},255)"
            etree.SubElement(grid, "rect", x=f"{self.margin + col * cell:.3f}", y=f"{self.margin + row * cell:.3f}",
                             width=f"{cell:.3f}", height=f"{cell:.3f}", fill=colour)
        self._write(root, output_filepath)

    @staticmethod
    def _transform(x, y, logx, logy):
        mask = np.isfinite(x) & np.isfinite(y)
        if logx:
            mask &= x > 0
        if logy:
            mask &= y > 0
        x, y = x[mask], y[mask]
        return (np.log10(x) if logx else x), (np.log10(y) if logy else y)


# ----------------------------------------------------------------------------
# Write manifest.json
# ----------------------------------------------------------------------------
class ManifestWriter:
    """
    Collects step status during a run and writes a manifest listing every output file
    with its sha256 checksum.

    Example Usage:
    manifest = ManifestWriter(out_dir, config_echo)
    manifest.step("contract", "ok")
    manifest.write()
    """
    tracked_packages = ["numpy", "scipy", "pfapack", "pandas", "lxml", "packaging"]

    def __init__(self, output_folder: str, config_echo: Dict):
        self.output_folder = output_folder
        self.config_echo = config_echo
        self.steps: List[Dict] = []
        self._start = time.perf_counter()

    def step(self, name: str, status: str, detail: str = ""):
        self.steps.append({"step": name, "status": status, "detail": detail})

    @staticmethod
    def sha256(filepath: str) -> str:
        digest = hashlib.sha256()
        with open(filepath, 'rb') as file:
            for chunk in iter(lambda: file.read(1 << 16), b""):
                digest.update(chunk)
        return digest.hexdigest()

    @classmethod
    def versions(cls) -> Dict[str, str]:
        found = {}
        for name in cls.tracked_packages:
            try:
                found[name] = str(Version(metadata.version(name)))
            except (metadata.PackageNotFoundError, InvalidVersion) as e:
                logging.warning(f"Failed to resolve version of '{name}': {e}")
                found[name] = "unknown"
        return found

    def artifacts(self) -> Dict[str, str]:
        files = {}
        for folder, _, names in os.walk(self.output_folder):
            for name in sorted(names):
                path = os.path.join(folder, name)
                relative = os.path.relpath(path, self.output_folder).replace(os.sep, "/")
                if relative == "manifest.json":
                    continue
                files[relative] = self.sha256(path)
        return dict(sorted(files.items()))

    def write(self) -> str:
        path = os.path.join(self.output_folder, "manifest.json")
        JsonWriter(path).write({
            "config": self.config_echo,
            "artifacts": self.artifacts(),
            "versions": self.versions(),
            "wall_clock_seconds": round(time.perf_counter() - self._start, 3),
            "steps": self.steps,
        })
        return path


def _ensure_directory(filepath: str):
    output_dir = os.path.dirname(filepath)
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)


# =============================================================================
# Data Processing Utilities
# =============================================================================
class DataUtilities:
    @staticmethod
    def antisymmetrize(matrix) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=float)
        return (matrix - matrix.T) / 2

    @staticmethod
    def cyclic_shift(values, shift: int) -> np.ndarray:
        """
        Returns values[(i + shift) mod n] for every i.
        """
        values = np.asarray(values)
        return np.roll(values, -shift, axis=0)

    @staticmethod
    def normalize_mean(values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        mean = values.mean()
        if mean == 0:
            raise ValueError("Cannot normalize a vector with zero mean")
        return values / mean

    @staticmethod
    def separation_matrix(size: int) -> np.ndarray:
        """
        Cyclic separation (k - j) mod size for every index pair.
        """
        index = np.arange(size)
        return (index[None, :] - index[:, None]) % size
