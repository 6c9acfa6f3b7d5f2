"""Command-line surface: generate, solve, sweep-rho, eval, bound, score.

Every command reads and writes the package's file formats (JSON instances,
solutions and weights; CSV traces and reports with JSON metadata sidecars).
Report-producing commands also render a PNG next to their delimited output.

Exit codes: 0 on success, 2 on infeasible or degenerate input, 3 on numerical
failure inside the solver.
"""

from __future__ import annotations

import contextlib
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .bnb import solve_bnb, worst_case_iterations
from .closedform import (
    ChannelsNotOrthogonal,
    solve_orthogonal_case,
    solve_single_user,
)
from .envelope import root_box
from .extract import ZeroBeamGain, recover_beamformers
from .gnn import (
    GnnPolicy,
    decide,
    extract_features,
    graph_from_doc,
    graph_to_doc,
    load_weights,
    policy_score,
)
from .model import (
    BeamformingSolution,
    SingularCovariance,
    crb,
    gen_scenario1,
    gen_scenario2,
    objective,
    sum_rate,
)
from .serial import (
    TraceRow,
    _format_float,
    dumps,
    load_instance,
    save_instance,
    save_solution,
    save_trace,
)
from .solver import InfeasibleBox, NumericalFailure

SEARCH_METHODS = ("bnb", "bnb-gnn")
CLOSED_FORM_METHODS = ("single-user", "orthogonal")


@contextlib.contextmanager
def _exit_codes():
    """Map domain errors to exit 2 and numerical failures to exit 3."""
    try:
        yield
    except (InfeasibleBox, ChannelsNotOrthogonal, SingularCovariance,
            ZeroBeamGain, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    except NumericalFailure as e:
        click.echo(f"numerical failure: {e}", err=True)
        sys.exit(3)


@click.group()
def main():
    """Certified global beamforming optimization for joint sensing and
    multi-user communication."""


# ---------------------------------------------------------------------------
# generate


@main.command()
@click.option("--scenario", type=click.IntRange(1, 2), default=1,
              show_default=True, help="1: unit-variance channels; 2: "
              "path-loss channels for users at 50-200 m.")
@click.option("--k", "K", type=int, required=True, help="Number of users.")
@click.option("--nt", type=int, default=6, show_default=True,
              help="Transmit antennas.")
@click.option("--nr", type=int, default=16, show_default=True,
              help="Receive antennas (sensing model).")
@click.option("--frame-len", type=int, default=16, show_default=True,
              help="Radar frame length L.")
@click.option("--power-dbm", type=float, default=30.0, show_default=True,
              help="Transmit power budget in dBm.")
@click.option("--rho", type=float, default=1.0, show_default=True,
              help="Sensing weight in the objective.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, writable=True),
              required=True, help="Instance file to write.")
def generate(scenario, K, nt, nr, frame_len, power_dbm, rho, seed, out):
    """Generate a random problem instance and write it to a file."""
    with _exit_codes():
        gen = gen_scenario1 if scenario == 1 else gen_scenario2
        from .model import dbm_to_linear
        inst = gen(K=K, Nt=nt, Nr=nr, L=frame_len,
                   P_T=dbm_to_linear(power_dbm), rho=rho, seed=seed)
        save_instance(inst, out)
        click.echo(f"wrote {out} (scenario {scenario}, K={K}, Nt={nt}, "
                   f"seed={seed})")


# ---------------------------------------------------------------------------
# solve


class _FeatureDumpPolicy:
    """Records the featurization of every popped node; optionally scores it.

    With no inner weights the policy preserves everything, so a search run
    through this hook is identical to an exact run.
    """

    def __init__(self, weights, fh):
        self.weights = weights
        self.fh = fh

    def keep(self, node, state) -> bool:
        g = extract_features(node, state.incumbent, state.inst, state.eps,
                             upper_bound=state.upper_bound,
                             lower_bound=state.lower_bound)
        score = None
        keep = True
        if self.weights is not None:
            score = policy_score(g, self.weights)
            keep = decide(score)
        rec = {"t": state.t, "node_id": node.id, "depth": node.depth,
               "kept": keep, "score": score, "graph": graph_to_doc(g)}
        self.fh.write(json.dumps(rec) + "\n")
        return keep


def _render_trace_png(rows, path, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = [r.t for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    ax1.plot(t, [r.U for r in rows], drawstyle="steps-post", label="upper bound")
    ax1.plot(t, [r.L for r in rows], drawstyle="steps-post", label="lower bound")
    ax1.set_ylabel("objective bound")
    ax1.legend()
    ax1.set_title(title)
    gaps = [max(r.gap, 0.0) for r in rows]
    if any(g > 0 for g in gaps):
        ax2.semilogy(t, [max(g, 1e-16) for g in gaps], drawstyle="steps-post")
    else:
        ax2.plot(t, gaps, drawstyle="steps-post")
    ax2.set_xlabel("search pass t")
    ax2.set_ylabel("gap U - L")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _solve_search(inst, method, eps, weights_path, node_cap, dump_path):
    policy = None
    weights = None
    if method == "bnb-gnn":
        weights = load_weights(weights_path)
        policy = GnnPolicy(weights)
    if dump_path is not None:
        fh = Path(dump_path).open("w")
        policy = _FeatureDumpPolicy(weights, fh)
    else:
        fh = None
    try:
        res = solve_bnb(inst, eps=eps, policy=policy, node_cap=node_cap)
    finally:
        if fh is not None:
            fh.close()
    base = BeamformingSolution(R_X=res.best.R_X, W=res.best.W,
                               Gamma=res.best.Gamma_hat)
    sol = recover_beamformers(base, inst)
    meta = {
        "certified_gap": res.certified_gap,
        "gap_certified": res.gap_certified,
        "iterations": res.iterations,
        "status": res.status,
        "wall_time": res.wall_time,
        "nodes_solved": res.nodes_solved,
        "policy_pruned": res.policy_pruned,
        "lower_bound": res.lower_bound,
    }
    return sol, res.trace.rows, meta


def _solve_closed_form(inst, method):
    t0 = time.perf_counter()
    if method == "single-user":
        if inst.K != 1:
            raise ValueError(f"single-user method requires K=1, got K={inst.K}")
        base = solve_single_user(inst)
    else:
        base = solve_orthogonal_case(inst)
    sol = recover_beamformers(base, inst)
    meta = {
        "certified_gap": None,
        "gap_certified": False,
        "iterations": 0,
        "status": "optimal",
        "wall_time": time.perf_counter() - t0,
        "nodes_solved": 0,
        "policy_pruned": 0,
        "lower_bound": None,
    }
    return sol, None, meta


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--method",
              type=click.Choice(SEARCH_METHODS + CLOSED_FORM_METHODS),
              default="bnb", show_default=True)
@click.option("--eps", type=float, default=1e-3, show_default=True,
              help="Certified optimality gap for the search methods.")
@click.option("--weights", type=click.Path(exists=True, dir_okay=False),
              help="Pruning-policy weight file (required for bnb-gnn).")
@click.option("--node-cap", type=int, default=100_000, show_default=True,
              help="Maximum search passes before returning best-so-far.")
@click.option("--dump-features", "dump_features",
              type=click.Path(dir_okay=False),
              help="Write one JSON line of node features per popped node.")
@click.option("--out", required=True,
              help="Output prefix: writes <out>.solution.json and, for "
                   "search methods, <out>.trace.csv (+ .meta.json) and "
                   "<out>.png.")
def solve(instance, method, eps, weights, node_cap, dump_features, out):
    """Solve an instance and write solution (and trace) files."""
    with _exit_codes():
        if method == "bnb-gnn" and weights is None:
            raise click.UsageError("--weights is required for method bnb-gnn")
        if dump_features is not None and method not in SEARCH_METHODS:
            raise click.UsageError(
                "--dump-features applies only to the search methods")
        inst = load_instance(instance)
        if method in SEARCH_METHODS:
            sol, rows, meta = _solve_search(inst, method, eps, weights,
                                            node_cap, dump_features)
        else:
            sol, rows, meta = _solve_closed_form(inst, method)
        obj = objective(inst, sol)
        sol_path = f"{out}.solution.json"
        save_solution(sol, sol_path, objective=obj,
                      sum_rate=sum_rate(inst, sol), crb=crb(inst, sol),
                      **meta_subset(meta))
        written = [sol_path]
        if rows is not None:
            trace_path = f"{out}.trace.csv"
            save_trace(rows, trace_path, metadata={
                "instance": str(instance), "method": method, "eps": eps,
                "node_cap": node_cap, **meta})
            png_path = f"{out}.png"
            _render_trace_png(rows, png_path,
                              f"{method} convergence (eps={eps:g})")
            written += [trace_path, f"{trace_path}.meta.json", png_path]
        click.echo(f"objective: {_format_float(obj)}")
        click.echo(f"status: {meta['status']}")
        click.echo(f"iterations: {meta['iterations']}")
        if meta["certified_gap"] is not None:
            click.echo(f"certified_gap: {_format_float(meta['certified_gap'])}")
        for p in written:
            click.echo(f"wrote {p}")


def meta_subset(meta):
    """Fields of the run metadata that the solution file stores."""
    return {k: meta[k] for k in ("certified_gap", "gap_certified",
                                 "iterations", "status", "wall_time")}


# ---------------------------------------------------------------------------
# sweep-rho


@main.command("sweep-rho")
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--rhos", required=True,
              help="Comma-separated sensing weights, e.g. 0.1,0.3,1,3,10.")
@click.option("--method", type=click.Choice(SEARCH_METHODS + CLOSED_FORM_METHODS),
              default="bnb", show_default=True)
@click.option("--eps", type=float, default=1e-3, show_default=True)
@click.option("--weights", type=click.Path(exists=True, dir_okay=False))
@click.option("--node-cap", type=int, default=100_000, show_default=True)
@click.option("--out", required=True,
              help="Output prefix: writes <out>.csv, <out>.meta.json, <out>.png.")
def sweep_rho(instance, rhos, method, eps, weights, node_cap, out):
    """Trace the rate/sensing trade-off by re-solving over a list of rho."""
    import dataclasses

    with _exit_codes():
        if method == "bnb-gnn" and weights is None:
            raise click.UsageError("--weights is required for method bnb-gnn")
        rho_list = [float(tok) for tok in rhos.split(",") if tok.strip()]
        if not rho_list or any(r <= 0 for r in rho_list):
            raise ValueError("need a nonempty list of positive rho values")
        template = load_instance(instance)
        records = []
        extras = []
        for rho in rho_list:
            inst = dataclasses.replace(template, rho=rho)
            if method in SEARCH_METHODS:
                sol, _, meta = _solve_search(inst, method, eps, weights,
                                             node_cap, None)
            else:
                sol, _, meta = _solve_closed_form(inst, method)
            records.append((rho, sum_rate(inst, sol), crb(inst, sol),
                            objective(inst, sol)))
            extras.append({"rho": rho, "iterations": meta["iterations"],
                           "status": meta["status"],
                           "certified_gap": meta["certified_gap"],
                           "wall_time": meta["wall_time"]})
        csv_path = f"{out}.csv"
        with open(csv_path, "w") as fh:
            fh.write("rho,sum_rate,crb,objective\n")
            for rec in records:
                fh.write(",".join(_format_float(v) for v in rec) + "\n")
        meta_path = f"{out}.meta.json"
        Path(meta_path).write_text(dumps({
            "instance": str(instance), "method": method, "eps": eps,
            "runs": extras}))
        png_path = f"{out}.png"
        _render_tradeoff_png(records, png_path, method)
        for p in (csv_path, meta_path, png_path):
            click.echo(f"wrote {p}")


def _render_tradeoff_png(records, path, method):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    crbs = [r[2] for r in records]
    rates = [r[1] for r in records]
    fig, ax = plt.subplots(figsize=(6.5, 5))
    ax.plot(crbs, rates, "o-")
    for rho, rate, c, _ in records:
        ax.annotate(f"rho={rho:g}", (c, rate), textcoords="offset points",
                    xytext=(6, 4), fontsize=8)
    ax.set_xlabel("estimation bound (CRB)")
    ax.set_ylabel("sum rate (nats)")
    ax.set_title(f"rate/sensing trade-off ({method})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# eval


@main.command("eval")
@click.argument("instances_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--weights", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--eps", type=float, default=1e-3, show_default=True)
@click.option("--node-cap", type=int, default=100_000, show_default=True)
@click.option("--out", required=True,
              help="Output prefix: writes <out>.csv, <out>.meta.json, <out>.png.")
def eval_cmd(instances_dir, weights, eps, node_cap, out):
    """Compare the learned policy against the exact search per instance.

    For every instance file in the directory, runs the exact search and the
    pruned search and reports the relative objective degradation (Ogap, in
    percent), the wall-clock speedup, and both iteration counts.
    """
    with _exit_codes():
        w = load_weights(weights)
        paths = _instance_files(instances_dir)
        if not paths:
            raise ValueError(f"no instance files found in {instances_dir}")
        rows = []
        for p in paths:
            inst = load_instance(p)
            exact = solve_bnb(inst, eps=eps, node_cap=node_cap)
            pruned = solve_bnb(inst, eps=eps, policy=GnnPolicy(w),
                               node_cap=node_cap)
            ogap = ((pruned.upper_bound - exact.upper_bound)
                    / abs(exact.upper_bound) * 100.0)
            speedup = (exact.wall_time / pruned.wall_time
                       if pruned.wall_time > 0 else float("inf"))
            rows.append((p.name, ogap, speedup, exact.iterations,
                         pruned.iterations, exact.nodes_solved,
                         pruned.nodes_solved))
        csv_path = f"{out}.csv"
        with open(csv_path, "w") as fh:
            fh.write("instance,ogap_percent,speedup,iterations_exact,"
                     "iterations_gnn,nodes_exact,nodes_gnn\n")
            for name, ogap, speedup, it_e, it_g, n_e, n_g in rows:
                fh.write(f"{name},{_format_float(ogap)},"
                         f"{_format_float(speedup)},{it_e},{it_g},{n_e},{n_g}\n")
        ogaps = [r[1] for r in rows]
        reductions = [r[5] / r[6] if r[6] else float("inf") for r in rows]
        summary = {
            "instances": len(rows),
            "eps": eps,
            "weights": str(weights),
            "mean_ogap_percent": float(np.mean(ogaps)),
            "max_ogap_percent": float(np.max(ogaps)),
            "median_node_reduction": float(np.median(reductions)),
            "mean_speedup": float(np.mean([r[2] for r in rows])),
        }
        meta_path = f"{out}.meta.json"
        Path(meta_path).write_text(dumps(summary))
        png_path = f"{out}.png"
        _render_eval_png(rows, png_path)
        click.echo(f"instances: {summary['instances']}")
        click.echo(f"mean Ogap: {summary['mean_ogap_percent']:.4f}%")
        click.echo(f"median node reduction: "
                   f"{summary['median_node_reduction']:.2f}x")
        for p in (csv_path, meta_path, png_path):
            click.echo(f"wrote {p}")


def _instance_files(directory):
    paths = []
    for p in sorted(Path(directory).glob("*.json")):
        try:
            doc = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if isinstance(doc, dict) and doc.get("format") == "isacbeam-instance":
            paths.append(p)
    return paths


def _render_eval_png(rows, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    idx = np.arange(len(rows))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 7))
    ax1.bar(idx, [r[1] for r in rows])
    ax1.set_ylabel("Ogap (%)")
    ax1.set_title("pruned-search objective degradation per instance")
    width = 0.4
    ax2.bar(idx - width / 2, [r[5] for r in rows], width, label="exact")
    ax2.bar(idx + width / 2, [r[6] for r in rows], width, label="pruned")
    ax2.set_xlabel("instance")
    ax2.set_ylabel("nodes solved")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# bound


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--eps", type=float, default=1e-3, show_default=True)
def bound(instance, eps):
    """Print the guaranteed iteration count and the root search box."""
    with _exit_codes():
        inst = load_instance(instance)
        T = worst_case_iterations(inst, eps)
        box = root_box(inst)
        click.echo(f"users: {inst.K}")
        click.echo(f"eps: {_format_float(eps)}")
        click.echo(f"worst_case_iterations: {T}")
        for k in range(inst.K):
            click.echo(f"root box user {k + 1}: "
                       f"[0, {_format_float(float(box.hi[k]))}]")


# ---------------------------------------------------------------------------
# score


@main.command()
@click.option("--weights", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--features", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON-lines file: each line a featurized node, either a "
                   "bare graph document or a feature-dump record.")
@click.option("--out", type=click.Path(dir_okay=False),
              help="CSV destination (default: stdout).")
def score(weights, features, out):
    """Score featurized nodes with a weight file (index,score CSV)."""
    with _exit_codes():
        w = load_weights(weights)
        lines = ["index,score"]
        with open(features) as fh:
            idx = 0
            for raw in fh:
                raw = raw.strip()
                if not raw:
                    continue
                doc = json.loads(raw)
                g = graph_from_doc(doc["graph"] if "graph" in doc else doc)
                lines.append(f"{idx},{_format_float(policy_score(g, w))}")
                idx += 1
        text = "\n".join(lines) + "\n"
        if out:
            Path(out).write_text(text)
            click.echo(f"wrote {out}")
        else:
            click.echo(text, nl=False)


if __name__ == "__main__":
    main()
