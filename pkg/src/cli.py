"""
This module drives the experiments from the command line.
- build_parser / main: argparse front end with one subcommand per experiment
- cmd_*: run one experiment for a compiled RunConfig, write its artifacts, return an exit status

Every run writes its CSV/SVG artifacts, summary.json, run.log and manifest.json into the output
folder. HyperbolicMTNError maps to exit status 2, any other exception to 1.

Example Usage:
hyperbolic-mtn contract --config run.json --out results/contract --seed 7

Dependencies:
- run_config.py: RunConfig, settings
- tiling.py, network.py, gaussian.py, disorder.py, mqa.py, parent.py, excite.py
- utils.py: JsonWriter, CSVWriter, SVGWriter, ManifestWriter
"""

from typing import Dict, Optional, Sequence, Tuple
import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from src.disorder import (aligned_fidelity, averaged_two_point, correlation_decay, decay_adjust,
                          extract_disorder, h_profile, reordering_residual, translation_scan)
from src.exceptions import ConfigurationError, HyperbolicMTNError
from src.excite import (occupations, optimize_bulk_for_eigenstate, parameter_grid, readout_basis,
                        sweep_central, sweep_ring)
from src.gaussian import (block_diagonalize, energy, ground_covariance, ising_covariance,
                          state_fidelity)
from src.mqa import (CouplingVector, average_coupling, build_stack, fit_weights, links_to_vertices,
                     max_product_fraction, stack_to_json)
from src.network import (BoundaryState, BulkInput, contract_network, find_critical_point,
                         optimize_high_chi, target_hamiltonian)
from src.parent import classify_parents, fit_nearest_neighbor, spectrum_comparison
from src.run_config import SUBCOMMANDS, RunConfig, settings
from src.tiling import (build_tiling, inflation_rule, predicted_length, scaling_factor,
                        seed_sequence, tiling_to_json)
from src.utils import CSVWriter, JsonWriter, ManifestWriter, SVGWriter


# =============================================================================
# Shared helpers
# =============================================================================
def _path(run: RunConfig, key: str) -> str:
    names = {**settings().outputs("common"), **settings().outputs(run.subcommand)}
    return os.path.join(run.output_folder, names[key])


def _configure_logging(run: RunConfig):
    os.makedirs(run.output_folder, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, str(run.log_level).upper(), logging.WARNING),
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        handlers=[
            logging.FileHandler(_path(run, "log"), mode='w'),
            logging.StreamHandler()
        ],
        force=True
    )


def resolve_bulk(run: RunConfig, tiling, k: Optional[int] = None) -> Tuple[BulkInput, Dict]:
    """
    Tile parameters from the descriptor, or from a search against the target Hamiltonian.
    """
    k = run.k if k is None else k
    if not run.optimize:
        if k == 1 and "params" not in run.bulk:
            names = run.tiling_entry["tile_parameters"]
            return BulkInput.from_named(tiling.p, names, run.bulk), {"source": "given"}
        return BulkInput.from_flat(tiling.p, k, run.bulk["params"]), {"source": "given"}
    if k == 1:
        point = find_critical_point(tiling, run.target)
        bulk = BulkInput(p=tiling.p, bulk=point.params)
    else:
        point = optimize_high_chi(tiling, k, run.target, seed=run.seed, threads=run.threads)
        bulk = BulkInput.from_flat(tiling.p, k, point.params)
    info = {"source": "optimized", "energy": point.energy, "ground_energy": point.ground_energy,
            "fidelity": point.fidelity, "degenerate": point.degenerate, "evaluations": point.evaluations}
    return bulk, info


def _boundary_state(run: RunConfig, n: Optional[int] = None) -> Tuple[BoundaryState, Dict]:
    tiling = build_tiling(run.p, run.q, run.n if n is None else n)
    bulk, info = resolve_bulk(run, tiling)
    info["params"] = bulk.flat
    return contract_network(tiling, bulk, run.schedule), info


def _disorder(run: RunConfig, state: BoundaryState):
    adjusted = decay_adjust(state.covariance)
    return adjusted, extract_disorder(adjusted, run.tiling_entry["symmetry_fraction"])


# =============================================================================
# Subcommands
# =============================================================================
def cmd_tile(run: RunConfig, manifest: ManifestWriter) -> Dict:
    tiling = build_tiling(run.p, run.q, run.n)
    manifest.step("build_tiling", "ok", f"{len(tiling.tiles)} tiles")
    JsonWriter(_path(run, "tiling")).write(tiling_to_json(tiling))
    rows = [{"layer": word.layer, "position": i, "letter": letter}
            for word in tiling.layer_words for i, letter in enumerate(word.word)]
    CSVWriter(_path(run, "letters")).write_df(pd.DataFrame(rows))

    summary = {"tiles": len(tiling.tiles), "edges": len(tiling.edges), "boundary_size": tiling.boundary_size,
               "layer_lengths": [len(word) for word in tiling.layer_words]}
    if run.tiling_entry is not None:
        rule = inflation_rule(run.p, run.q)
        seed = seed_sequence(run.p)
        summary["predicted_lengths"] = [predicted_length(seed, rule, layer) for layer in range(run.n + 1)]
        summary["scaling_factor"] = scaling_factor(rule)
    return summary


def cmd_contract(run: RunConfig, manifest: ManifestWriter) -> Dict:
    state, info = _boundary_state(run)
    manifest.step("contract_network", "ok", f"N={state.n_sites}")
    CSVWriter(_path(run, "covariance")).write_matrix(state.covariance)
    if run.svg:
        SVGWriter().heatmap(state.covariance, _path(run, "heatmap"), title="Boundary covariance")

    n_sites = state.n_sites
    hamiltonian = target_hamiltonian("ising", n_sites)
    summary = {**info, "n_sites": n_sites, "log_weight": state.log_weight,
               "purity_error": float(np.abs(state.covariance.T @ state.covariance - np.eye(2 * n_sites)).max()),
               "ising_energy": energy(hamiltonian, state.covariance),
               "ising_fidelity": state_fidelity(state.covariance, ising_covariance(n_sites))}
    decay = settings().decay
    d_max = int(2 * n_sites * decay["d_max_fraction"])
    d_min = run.analysis.d_min or decay["d_min"]
    if d_max > d_min + 2:
        profile = correlation_decay(state.covariance, d_min, d_max, decay["distance"])
        summary["decay_exponent"] = profile.exponent
    return summary


def cmd_disorder(run: RunConfig, manifest: ManifestWriter) -> Dict:
    state, info = _boundary_state(run)
    n_sites = state.n_sites
    decay = settings().decay
    profile = correlation_decay(state.covariance, run.analysis.d_min or decay["d_min"],
                                int(2 * n_sites * decay["d_max_fraction"]), decay["distance"])
    adjusted, g = _disorder(run, state)
    manifest.step("extract_disorder", "ok", f"{len(g)} entries")

    separations = np.arange(profile.size)
    CSVWriter(_path(run, "decay")).write_table({"d": separations, "c": profile.values})
    CSVWriter(_path(run, "disorder")).write_table({"j": np.arange(len(g)), "g": g.values})
    h = h_profile(g, settings().disorder["linearity_scale"])
    CSVWriter(_path(run, "h_profile")).write_table({"k": np.arange(1, len(g) + 1), "h": h.values})
    length = run.analysis.subsystem_length or max(1, (len(g) - 1) // 3)
    scan = translation_scan(g, length)
    CSVWriter(_path(run, "scan")).write_table({"offset": scan.offsets, "fidelity": scan.fidelity})
    CSVWriter(_path(run, "correlators")).write_df(averaged_two_point(state.covariance, g))
    if run.svg:
        SVGWriter().heatmap(adjusted.matrix, _path(run, "heatmap"), title="Decay-adjusted covariance", clip=2.0)
        SVGWriter().line_plot({"g": (np.arange(len(g)), g.values)}, _path(run, "plot"),
                              title="Disorder vector", xlabel="j", ylabel="g_j")

    summary = {**info, "n_sites": n_sites, "decay_exponent": profile.exponent, "decay_window": list(profile.window),
               "masked_entries": adjusted.masked,
               "reordering_residual": reordering_residual(adjusted, g, run.analysis.band or settings().disorder["band"]),
               "h_score": h.score, "h_local_score": h.local_score,
               "scan_baseline": scan.baseline, "scan_peaks": scan.peaks}
    if run.n >= 2:
        smaller, _ = _boundary_state(run, run.n - 1)
        fidelity, offset = aligned_fidelity(_disorder(run, smaller)[1], g)
        summary["self_similarity"] = {"fidelity": fidelity, "offset": offset}
    return summary


def cmd_mqa_fit(run: RunConfig, manifest: ManifestWriter) -> Dict:
    state, info = _boundary_state(run)
    _, g = _disorder(run, state)
    target = links_to_vertices(CouplingVector.from_disorder(g.values).inter_site)
    rule = inflation_rule(run.p, run.q)
    seed = run.tiling_entry["seed"]
    free_letter = run.tiling_entry["free_letter"]
    fit = fit_weights(rule, seed, run.n, target, free_letter)
    manifest.step("fit_weights", "ok", f"residual {fit.residual:.3e}")

    stack = build_stack(rule, seed, run.n)
    JsonWriter(_path(run, "stack")).write(stack_to_json(stack))
    aligned = np.roll(fit.target, -fit.shift)
    CSVWriter(_path(run, "couplings")).write_table({"vertex": np.arange(aligned.size), "target": aligned,
                                                    "mqa": fit.couplings})
    if run.svg:
        x = np.arange(aligned.size)
        SVGWriter().line_plot({"boundary": (x, aligned), "MQA": (x, fit.couplings)}, _path(run, "plot"),
                              title="Inter-site couplings", xlabel="vertex", ylabel="J")
    return {**info, "weights": fit.weights.values, "residual": fit.residual, "shift": fit.shift,
            "reflection_axis": fit.axis,
            "average_coupling": [average_coupling(rule, seed, fit.weights, layer) for layer in range(run.n + 1)],
            "max_product_fraction": max_product_fraction(stack, free_letter)}


def cmd_spectrum(run: RunConfig, manifest: ManifestWriter) -> Dict:
    g_by_size, sources = {}, {}
    for n in run.analysis.n_values:
        state, info = _boundary_state(run, n)
        g_by_size[state.n_sites] = _disorder(run, state)[1].values
        sources[state.n_sites] = info["params"]
        manifest.step(f"disorder n={n}", "ok", f"N={state.n_sites}")
    comparison = spectrum_comparison(g_by_size)
    CSVWriter(_path(run, "spectrum")).write_df(comparison.table)
    if run.svg:
        table = comparison.table
        largest = table[table["n_sites"] == table["n_sites"].max()]
        SVGWriter().line_plot({name: (largest["k"], largest[f"{name}_rescaled"]) for name in ("mdi", "ising", "continuum")},
                              _path(run, "plot"), title="Rescaled spectrum", xlabel="k", ylabel="2N lambda_k")
    return {**comparison.summary, "params": sources}


def _search_bulk(run: RunConfig, tiling, k: int) -> BulkInput:
    if k == 1:
        return BulkInput(p=tiling.p, bulk=find_critical_point(tiling, run.target).params)
    return BulkInput.from_flat(tiling.p, k, optimize_high_chi(tiling, k, run.target, seed=run.seed, threads=run.threads).params)


def cmd_fidelity_sweep(run: RunConfig, manifest: ManifestWriter) -> Dict:
    tiling = build_tiling(run.p, run.q, run.n)
    hamiltonian = target_hamiltonian(run.target, tiling.boundary_size)
    reference = ground_covariance(block_diagonalize(hamiltonian))
    rows = []
    for chi in run.analysis.chi_values:
        k = {2: 1, 4: 2, 8: 3}[chi]
        if run.optimize or k == run.k:
            bulk, _ = resolve_bulk(run, tiling, k)
        else:
            bulk = _search_bulk(run, tiling, k)
        state = contract_network(tiling, bulk, run.schedule)
        rows.append({"chi": chi, "parameters": bulk.flat.size, "energy": energy(hamiltonian, state.covariance),
                     "fidelity": state_fidelity(state.covariance, reference)})
        manifest.step(f"chi={chi}", "ok", f"fidelity {rows[-1]['fidelity']:.6f}")
    table = pd.DataFrame(rows)
    CSVWriter(_path(run, "fidelity")).write_df(table)
    if run.svg:
        SVGWriter().line_plot({"fidelity": (table["chi"], table["fidelity"])}, _path(run, "plot"),
                              title="Fidelity against bond dimension", xlabel="chi", ylabel="F", logx=True)
    fidelity = table["fidelity"].to_numpy()
    return {"n_sites": tiling.boundary_size, "fidelity": dict(zip(table["chi"].tolist(), fidelity.tolist())),
            "monotone": bool(np.all(np.diff(fidelity) >= -1e-9))}


def cmd_parent_fit(run: RunConfig, manifest: ManifestWriter) -> Dict:
    state, info = _boundary_state(run)
    classification = classify_parents(state.covariance)
    manifest.step("classify_parents", "ok", f"null dimension {classification.null_dimension}")
    fit = fit_nearest_neighbor(state.covariance, run.seed)
    manifest.step("fit_nearest_neighbor", "ok" if fit.converged else "warning", f"fidelity {fit.fidelity:.6f}")

    _, g = _disorder(run, state)
    mdi = CouplingVector.from_disorder(g.values).values
    mdi = mdi / mdi.mean()
    least_squares = classification.least_squares / classification.least_squares.mean()
    index = np.arange(fit.couplings.size)
    CSVWriter(_path(run, "couplings")).write_table({"k": index, "fitted": fit.couplings, "least_squares": least_squares,
                                                    "mdi": mdi})
    if run.svg:
        SVGWriter().line_plot({"fitted": (index, fit.couplings), "MDI": (index, mdi)}, _path(run, "plot"),
                              title="Nearest-neighbour parent couplings", xlabel="k", ylabel="J_k")
    feasibility = classification.feasibility
    return {**info, "fidelity": fit.fidelity, "start_fidelity": fit.start_fidelity, "converged": fit.converged,
            "iterations": fit.iterations, "restart_spread": fit.restart_spread,
            "fit_unique": fit.unique, "null_dimension": classification.null_dimension,
            "singular_values": classification.singular_values, "unique": classification.unique,
            "ground": classification.ground, "occupied_modes": int(np.sum(classification.signs < 0)),
            "linear_feasibility": None if feasibility is None else {"feasible": feasibility.feasible,
                                                                    "message": feasibility.message},
            "mdi_fidelity_gap": float(np.sqrt(np.mean((fit.couplings - mdi) ** 2)))}


def cmd_excite(run: RunConfig, manifest: ManifestWriter) -> Dict:
    state, info = _boundary_state(run)
    tiling, bulk = state.tiling, state.bulk
    basis = readout_basis(state.covariance)
    background = occupations(state.covariance, basis)
    manifest.step("readout_basis", "ok", f"background leakage {background.leakage:.3e}")

    config = settings().excite
    a0_values = parameter_grid(run.analysis.a0_grid or config["a0_grid"])
    a1_values = parameter_grid(run.analysis.a1_grid or config["a1_grid"])
    central = sweep_central(tiling, bulk, basis, a0_values, run.threads)
    manifest.step("sweep_central", "ok", json.dumps(central.landmarks, sort_keys=True))
    ring = sweep_ring(tiling, bulk, basis, a1_values, a0_values, run.threads)
    manifest.step("sweep_ring", "ok", f"best a1 {ring.best_a1}")
    CSVWriter(_path(run, "sweep")).write_df(central.table)
    CSVWriter(_path(run, "ring")).write_df(ring.table)

    occupation_table = {"mode": np.arange(1, basis.n_modes + 1), "energy": basis.energies, "background": background.e}
    fits = {}
    for target in run.analysis.targets:
        fit = optimize_bulk_for_eigenstate(tiling, bulk, basis, target, seed=run.seed)
        fits[target] = fit
        if fit.readout is not None:
            occupation_table[target] = fit.readout.e
        manifest.step(f"eigenstate {target}", "warning" if fit.stagnated else "ok", f"fidelity {fit.fidelity:.6f}")
    CSVWriter(_path(run, "occupations")).write_table(occupation_table)
    JsonWriter(_path(run, "defects")).write({target: fit.defects.to_json() for target, fit in fits.items()})
    if run.svg:
        table = central.table
        SVGWriter().line_plot({"e1": (table["a0"], table["e1"]), "e2": (table["a0"], table["e2"])}, _path(run, "plot"),
                              title="Central defect sweep", xlabel="a0", ylabel="e")

    return {**info, "background_leakage": background.leakage, "background_label": background.label,
            "landmarks": central.landmarks, "ring_best_a1": ring.best_a1, "ring_landmarks": ring.central.landmarks,
            "eigenstates": {target: {"fidelity": fit.fidelity, "distance": fit.distance, "stagnated": fit.stagnated,
                                     "label": None if fit.readout is None else fit.readout.label,
                                     "orbits": len(fit.orbits)} for target, fit in fits.items()}}


COMMANDS = {
    "tile": cmd_tile,
    "contract": cmd_contract,
    "disorder": cmd_disorder,
    "mqa_fit": cmd_mqa_fit,
    "spectrum": cmd_spectrum,
    "fidelity_sweep": cmd_fidelity_sweep,
    "parent_fit": cmd_parent_fit,
    "excite": cmd_excite,
}


# =============================================================================
# Entry point
# =============================================================================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperbolic-mtn",
                                     description="Matchgate tensor networks on hyperbolic tilings")
    parser.add_argument("subcommand", choices=[name.replace("_", "-") for name in SUBCOMMANDS] + list(SUBCOMMANDS))
    parser.add_argument("--config", help="JSON run descriptor")
    parser.add_argument("--out", help="output folder (overrides HYPERBOLIC_MTN_OUT)")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--threads", type=int, help="worker threads (overrides HYPERBOLIC_MTN_THREADS)")
    parser.add_argument("--no-svg", action="store_true", help="skip SVG figures")
    return parser


def _load_descriptor(path: Optional[str]) -> Dict:
    if path is None:
        return {}
    try:
        with open(path, 'r') as file:
            return json.load(file)
    except Exception as e:
        logging.error(f"Failed to read run descriptor '{path}': {e}")
        raise ConfigurationError(f"cannot read run descriptor '{path}': {e}")


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        descriptor = _load_descriptor(args.config)
        descriptor["subcommand"] = args.subcommand.replace("-", "_")
        config = RunConfig(descriptor, out=args.out, seed=args.seed, threads=args.threads, svg=not args.no_svg)
    except ConfigurationError as e:
        for violation in e.violations:
            print(f"configuration error: {violation}", file=sys.stderr)
        return 2

    _configure_logging(config)
    manifest = ManifestWriter(config.output_folder, config.echo)
    status = 0
    try:
        summary = COMMANDS[config.subcommand](config, manifest)
        JsonWriter(_path(config, "summary")).write({"subcommand": config.subcommand, "config": config.echo, **summary})
        manifest.step(config.subcommand, "ok")
    except HyperbolicMTNError as e:
        logging.error(f"Failed to run {config.subcommand}: {e}")
        manifest.step(config.subcommand, "failed", f"{type(e).__name__}: {e}")
        status = 2
    except Exception as e:
        logging.error(f"Failed to run {config.subcommand}: {e}")
        manifest.step(config.subcommand, "failed", f"{type(e).__name__}: {e}")
        status = 1
    finally:
        manifest.write()
        logging.shutdown()
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
