"""FastAPI service exposing the tester-evaluation operations.

Error contract: every handled failure returns a JSON body
``{"error": {"category": ..., "invariant": ..., "detail": ...}}`` with
category "validation" (422), "domain" (400), or "degenerate" (409).
Clients map these onto exit codes 2 / 3 / 4.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import (
    BoundaryStateError,
    DegenerateExperimentError,
    InvariantViolation,
    SupportViolationError,
)
from ..loss import make_loss
from ..montecarlo import (
    ExperimentConfig,
    decay_csv,
    figure2_sweep,
    risk_csv,
    run_experiment,
    sweep_csv,
)
from ..qstate import BlochState
from ..rates import kl_infimum_oracle, rate_report
from ..tester import BUILTIN_TESTERS, Tester, informational_completeness
from . import schemas


def _resolve_tester(spec: schemas.TesterInput) -> Tester:
    if spec.alias is not None:
        factory = BUILTIN_TESTERS.get(spec.alias)
        if factory is None:
            raise InvariantViolation(
                "tester_alias",
                f"unknown alias {spec.alias!r}; available: {sorted(BUILTIN_TESTERS)}",
            )
        return factory()
    return Tester.from_json_dict(
        {
            "dim": spec.dim,
            "elements": [
                {"re": m.re, "im": m.im if m.im is not None else None} for m in spec.elements
            ],
        }
    )


def _resolve_state(spec: schemas.StateInput, dim: int) -> BlochState:
    if spec.bloch is not None:
        return BlochState(dim, np.asarray(spec.bloch, dtype=float))
    if dim != 2:
        raise InvariantViolation("polar_dim", "polar coordinates are defined for dim 2")
    r, theta, phi = spec.polar
    vec = r * np.array(
        [
            math.sin(theta) * math.cos(phi),
            math.sin(theta) * math.sin(phi),
            math.cos(theta),
        ]
    )
    return BlochState(2, vec)


def _error_response(status: int, category: str, detail: str, invariant: str | None = None):
    body = schemas.ErrorResponse(
        error=schemas.ErrorBody(category=category, invariant=invariant, detail=detail)
    )
    return JSONResponse(status_code=status, content=body.model_dump())


def create_app() -> FastAPI:
    app = FastAPI(
        title="tomobench",
        version=__version__,
        description="Decay-rate evaluation of quantum-tomography measurement setups",
    )

    @app.exception_handler(InvariantViolation)
    async def _invariant(request: Request, exc: InvariantViolation):
        return _error_response(422, "validation", exc.detail or str(exc), exc.invariant)

    @app.exception_handler(BoundaryStateError)
    async def _boundary(request: Request, exc: BoundaryStateError):
        return _error_response(400, "domain", str(exc))

    @app.exception_handler(SupportViolationError)
    async def _support(request: Request, exc: SupportViolationError):
        return _error_response(400, "domain", str(exc))

    @app.exception_handler(DegenerateExperimentError)
    async def _degenerate(request: Request, exc: DegenerateExperimentError):
        return _error_response(409, "degenerate", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _request_validation(request: Request, exc: RequestValidationError):
        return _error_response(422, "validation", str(exc.errors()))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/testers/validate", response_model=schemas.ValidateTesterResponse)
    def validate_tester(req: schemas.TesterInput):
        tester = _resolve_tester(req)
        complete, rank = informational_completeness(tester)
        return schemas.ValidateTesterResponse(
            dim=tester.dim,
            n_outcomes=tester.n_outcomes,
            informationally_complete=complete,
            rank=rank,
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_rates(req: schemas.EvalRequest):
        tester = _resolve_tester(req.tester)
        state = _resolve_state(req.state, tester.dim)
        loss = make_loss(req.loss, tester.dim, tester)
        report = rate_report(tester, state, loss)
        complete, rank = informational_completeness(tester)
        return schemas.EvalResponse(
            dim=tester.dim,
            loss=loss.name,
            state=state.s.tolist(),
            informationally_complete=complete,
            rank=rank,
            report=schemas.RateReportModel(
                fisher=report.fisher.tolist(),
                hesse=report.hesse.tolist(),
                g_matrix=report.g.tolist(),
                sigma1=report.sigma1,
                trace_g=report.trace_g,
                error_rate_bound=report.error_rate_bound,
                risk_rate=report.risk_rate,
            ),
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        tester = _resolve_tester(req.tester)
        loss = make_loss(req.loss, tester.dim, tester)
        table = figure2_sweep(tester, req.radius, loss, req.n_theta, req.n_phi)
        return schemas.SweepResponse(
            radius=req.radius,
            loss=loss.name,
            rows=[
                schemas.SweepRowModel(
                    theta=r.theta, phi=r.phi, tr_g=r.tr_g, sigma1_g=r.sigma1_g
                )
                for r in table.rows
            ],
            csv=sweep_csv(table),
        )

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest):
        tester = _resolve_tester(req.tester)
        state = _resolve_state(req.state, tester.dim)
        loss = make_loss(req.loss, tester.dim, tester)
        cfg = ExperimentConfig(
            tester=tester,
            true_state=state,
            loss=loss,
            eps_sq=req.eps_sq,
            n_values=tuple(req.n_values),
            repetitions=req.repetitions,
            seed=req.seed,
        )
        decay, risk = run_experiment(cfg, req.estimator)
        if decay.all_censored:
            raise DegenerateExperimentError(
                "all runs censored (every p_hat is zero); "
                "lower eps_sq or reduce the trial counts"
            )
        return schemas.SimulateResponse(
            config=cfg.describe(),
            estimator=req.estimator,
            sigma1=decay.sigma1,
            trace_g=decay.trace_g,
            theory_slope=decay.theory_slope,
            slope=decay.slope,
            slope_stderr=decay.slope_stderr,
            ratio=decay.ratio,
            fit_message=decay.fit_message,
            unphysical_total=decay.unphysical_total,
            censored_n=decay.censored_n,
            theory_risk_rate=risk.theory_rate,
            decay=[
                schemas.DecayPointModel(
                    n=pt.n,
                    exceed_count=pt.exceed_count,
                    reps=pt.reps,
                    p_hat=pt.p_hat,
                    wilson_low=pt.wilson_low,
                    wilson_high=pt.wilson_high,
                    censored=pt.censored,
                )
                for pt in decay.points
            ],
            risk=[
                schemas.RiskPointModel(
                    n=pt.n,
                    mean_loss=pt.mean_loss,
                    n_times_mean=pt.n_times_mean,
                    ratio=pt.ratio,
                )
                for pt in risk.points
            ],
            decay_csv=decay_csv(decay),
            risk_csv=risk_csv(risk),
        )

    @app.post("/oracle", response_model=schemas.OracleResponse)
    def oracle(req: schemas.OracleRequest):
        tester = _resolve_tester(req.tester)
        state = _resolve_state(req.state, tester.dim)
        loss = make_loss(req.loss, tester.dim, tester)
        report = rate_report(tester, state, loss)
        rows = []
        for eps_sq in req.eps_sq_list:
            rate = kl_infimum_oracle(
                tester, state, loss, eps_sq,
                n_directions=req.n_directions, seed=req.seed,
            )
            rows.append(
                schemas.OracleRowModel(eps_sq=eps_sq, rate=rate, ratio=rate / eps_sq)
            )
        lines = ["eps_sq,rate,rate_over_eps_sq"]
        for row in rows:
            lines.append(
                f"{format(row.eps_sq, '.17g')},{format(row.rate, '.17g')},"
                f"{format(row.ratio, '.17g')}"
            )
        return schemas.OracleResponse(
            loss=loss.name,
            sigma1=report.sigma1,
            reference_rate=report.error_rate_bound,
            rows=rows,
            csv="\n".join(lines) + "\n",
        )

    return app


app = create_app()
