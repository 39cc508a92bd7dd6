"""Command-line front end.

The CLI is a thin client of the evaluation service: each command builds a
request, sends it to an in-process service instance (or a remote one via
--server), and writes the response to files.  A manifest recording the
command, full configuration, seed, and output paths is written next to
every output; re-running the same command reproduces the outputs
byte-for-byte.

Exit codes: 0 success, 2 validation failure, 3 domain error (boundary
state / unidentifiable direction), 4 degenerate experiment.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click
import httpx

from . import __version__

EXIT_CODES = {"validation": 2, "domain": 3, "degenerate": 4}


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    async def go():
        if server:
            async with httpx.AsyncClient(base_url=server, timeout=None) as client:
                return await client.post(path, json=payload)
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://tomobench", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _call(server: str | None, path: str, payload: dict) -> dict:
    try:
        resp = _post(server, path, payload)
    except httpx.HTTPError as exc:
        click.echo(f"error [transport]: {exc}", err=True)
        sys.exit(1)
    if resp.status_code == 200:
        return resp.json()
    try:
        err = resp.json().get("error", {})
    except json.JSONDecodeError:
        click.echo(f"error [http {resp.status_code}]: {resp.text[:500]}", err=True)
        sys.exit(1)
    category = err.get("category", "")
    invariant = err.get("invariant")
    parts = [f"error [{category or 'unknown'}]"]
    if invariant:
        parts.append(f"invariant={invariant}")
    parts.append(err.get("detail", ""))
    click.echo(" ".join(parts), err=True)
    sys.exit(EXIT_CODES.get(category, 1))


def _tester_payload(value: str) -> dict:
    path = Path(value)
    if path.suffix == ".json" or path.exists():
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            click.echo(f"error [validation] tester file not found: {value}", err=True)
            sys.exit(2)
        except json.JSONDecodeError as exc:
            click.echo(f"error [validation] invariant=schema invalid JSON: {exc}", err=True)
            sys.exit(2)
        return {"dim": data.get("dim"), "elements": data.get("elements")}
    return {"alias": value}


def _parse_floats(text: str, label: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        click.echo(f"error [validation] cannot parse {label}: {text!r}", err=True)
        sys.exit(2)


def _state_payload(state: str | None, polar: str | None) -> dict:
    if (state is None) == (polar is None):
        click.echo("error [validation] give exactly one of --state or --polar", err=True)
        sys.exit(2)
    if state is not None:
        return {"bloch": _parse_floats(state, "--state")}
    triple = _parse_floats(polar, "--polar")
    if len(triple) != 3:
        click.echo("error [validation] --polar needs R,THETA,PHI", err=True)
        sys.exit(2)
    return {"polar": triple}


def _write_manifest(path: Path, command: str, config: dict, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "version": __version__,
        "outputs": outputs,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@click.group()
@click.version_option(__version__)
@click.option("--server", default=None, envvar="TOMOBENCH_SERVER",
              help="Base URL of a running service; defaults to in-process execution.")
@click.pass_context
def main(ctx, server):
    """Evaluate quantum-tomography measurement setups.

    TOMOBENCH_THREADS caps simulation parallelism (results are identical
    for any setting).
    """
    ctx.obj = {"server": server}


@main.command("eval")
@click.option("--tester", required=True, help="Tester JSON path or alias (six-state, z-projective).")
@click.option("--state", default=None, help="Bloch coordinates, comma separated.")
@click.option("--polar", default=None, help="R,THETA,PHI polar coordinates (dim 2).")
@click.option("--loss", default="hs", show_default=True,
              help="hs | trace | fidelity | kl | euclidean | functional:<name>")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Write the report JSON here instead of stdout.")
@click.pass_context
def cmd_eval(ctx, tester, state, polar, loss, out):
    """Rate report (sigma1, trace, both decay rates) at one state."""
    payload = {
        "tester": _tester_payload(tester),
        "state": _state_payload(state, polar),
        "loss": loss,
    }
    result = _call(ctx.obj["server"], "/eval", payload)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        out.write_text(text)
        _write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                        "eval", payload, [str(out)])
        click.echo(f"wrote {out}")


@main.command("sweep")
@click.option("--tester", required=True, help="Tester JSON path or alias.")
@click.option("--radius", type=float, required=True, help="Bloch radius, 0 < r < 1.")
@click.option("--loss", default="hs", show_default=True)
@click.option("--grid", default="25,24", show_default=True, help="N_THETA,N_PHI")
@click.option("--out", type=click.Path(path_type=Path), default=Path("sweep.csv"),
              show_default=True)
@click.pass_context
def cmd_sweep(ctx, tester, radius, loss, grid, out):
    """Polar-grid sweep of tr(G) and sigma1(G) at fixed radius (CSV)."""
    try:
        n_theta, n_phi = (int(tok) for tok in grid.split(","))
    except ValueError:
        click.echo("error [validation] --grid needs N_THETA,N_PHI", err=True)
        sys.exit(2)
    payload = {
        "tester": _tester_payload(tester),
        "radius": radius,
        "loss": loss,
        "n_theta": n_theta,
        "n_phi": n_phi,
    }
    result = _call(ctx.obj["server"], "/sweep", payload)
    out.write_text(result["csv"])
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                    "sweep", payload, [str(out)])
    click.echo(f"wrote {out} ({len(result['rows'])} grid points)")


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="JSON experiment config; inline flags override its fields.")
@click.option("--tester", default=None, help="Tester JSON path or alias.")
@click.option("--state", default=None, help="Bloch coordinates, comma separated.")
@click.option("--polar", default=None, help="R,THETA,PHI polar coordinates.")
@click.option("--loss", default=None)
@click.option("--eps-sq", type=float, default=None, help="Loss threshold eps^2.")
@click.option("--n-list", default=None, help="Comma-separated trial counts.")
@click.option("--reps", type=int, default=None, help="Repetitions per trial count.")
@click.option("--seed", type=int, default=None)
@click.option("--estimator", type=click.Choice(["mle", "linear"]), default=None)
@click.option("--out", type=click.Path(path_type=Path), default=Path("."),
              show_default=True, help="Output directory.")
@click.pass_context
def cmd_simulate(ctx, config_path, tester, state, polar, loss, eps_sq, n_list,
                 reps, seed, estimator, out):
    """Simulate tomography and verify both decay rates (CSV + JSON summary)."""
    cfg: dict = {}
    if config_path is not None:
        try:
            cfg = json.loads(config_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            click.echo(f"error [validation] invariant=schema bad config: {exc}", err=True)
            sys.exit(2)
    if tester is not None:
        cfg["tester"] = tester
    if state is not None:
        cfg["state"] = _parse_floats(state, "--state")
    if polar is not None:
        cfg["state"] = {"polar": _parse_floats(polar, "--polar")}
    if loss is not None:
        cfg["loss"] = loss
    if eps_sq is not None:
        cfg["eps_sq"] = eps_sq
    if n_list is not None:
        cfg["n_values"] = [int(float(tok)) for tok in n_list.split(",")]
    if reps is not None:
        cfg["repetitions"] = reps
    if seed is not None:
        cfg["seed"] = seed
    if estimator is not None:
        cfg["estimator"] = estimator

    missing = [key for key in ("tester", "state", "eps_sq", "n_values",
                               "repetitions", "seed") if key not in cfg]
    if missing:
        click.echo(f"error [validation] missing config fields: {missing}", err=True)
        sys.exit(2)

    tester_spec = cfg["tester"]
    if isinstance(tester_spec, str):
        tester_spec = _tester_payload(tester_spec)
    state_spec = cfg["state"]
    if isinstance(state_spec, list):
        state_spec = {"bloch": state_spec}
    payload = {
        "tester": tester_spec,
        "state": state_spec,
        "loss": cfg.get("loss", "hs"),
        "eps_sq": cfg["eps_sq"],
        "n_values": cfg["n_values"],
        "repetitions": cfg["repetitions"],
        "seed": cfg["seed"],
        "estimator": cfg.get("estimator", "mle"),
    }
    result = _call(ctx.obj["server"], "/simulate", payload)

    out.mkdir(parents=True, exist_ok=True)
    decay_path = out / "decay.csv"
    risk_path = out / "risk.csv"
    summary_path = out / "summary.json"
    decay_path.write_text(result["decay_csv"])
    risk_path.write_text(result["risk_csv"])
    summary = {key: val for key, val in result.items()
               if key not in ("decay_csv", "risk_csv")}
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_manifest(out / "manifest.json", "simulate", payload,
                    [str(decay_path), str(risk_path), str(summary_path)])

    if result["slope"] is None:
        click.echo(f"no slope fit: {result['fit_message']}")
    else:
        click.echo(
            f"slope {result['slope']:.6g} vs theory {result['theory_slope']:.6g} "
            f"(ratio {result['ratio']:.4g})"
        )
    click.echo(f"wrote {decay_path}, {risk_path}, {summary_path}")


@main.command("oracle")
@click.option("--tester", required=True, help="Tester JSON path or alias.")
@click.option("--state", default=None, help="Bloch coordinates, comma separated.")
@click.option("--polar", default=None, help="R,THETA,PHI polar coordinates.")
@click.option("--loss", default="hs", show_default=True)
@click.option("--eps-sq-list", default="1e-2,1e-3,1e-4", show_default=True,
              help="Comma-separated loss thresholds eps^2.")
@click.option("--n-directions", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Also write the table as CSV.")
@click.pass_context
def cmd_oracle(ctx, tester, state, polar, loss, eps_sq_list, n_directions, seed, out):
    """Large-deviation rate R_eps from its variational definition."""
    payload = {
        "tester": _tester_payload(tester),
        "state": _state_payload(state, polar),
        "loss": loss,
        "eps_sq_list": _parse_floats(eps_sq_list, "--eps-sq-list"),
        "n_directions": n_directions,
        "seed": seed,
    }
    result = _call(ctx.obj["server"], "/oracle", payload)
    click.echo(f"loss {result['loss']}: 1/sigma1(G) = {result['reference_rate']:.10g}")
    click.echo(f"{'eps_sq':>12} {'R_eps':>16} {'R_eps/eps_sq':>16}")
    for row in result["rows"]:
        click.echo(f"{row['eps_sq']:>12.6g} {row['rate']:>16.10g} {row['ratio']:>16.10g}")
    if out is not None:
        out.write_text(result["csv"])
        _write_manifest(out.with_suffix(out.suffix + ".manifest.json"),
                        "oracle", payload, [str(out)])
        click.echo(f"wrote {out}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def cmd_serve(host, port):
    """Run the evaluation service with uvicorn."""
    import uvicorn

    uvicorn.run("tomobench.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
