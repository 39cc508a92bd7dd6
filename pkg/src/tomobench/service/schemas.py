"""Pydantic request/response models for the evaluation service."""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator


class MatrixData(BaseModel):
    """A complex matrix split into real and imaginary parts, row-major."""

    re: list[list[float]]
    im: list[list[float]] | None = None


class TesterInput(BaseModel):
    """A POVM, either by built-in alias or as explicit matrices."""

    alias: str | None = None
    dim: int | None = None
    elements: list[MatrixData] | None = None

    @model_validator(mode="after")
    def _one_of(self):
        if self.alias is not None:
            if self.elements is not None:
                raise ValueError("give either 'alias' or 'elements', not both")
            return self
        if self.elements is None or self.dim is None:
            raise ValueError("need 'alias', or both 'dim' and 'elements'")
        return self


class StateInput(BaseModel):
    """A state, as Bloch coordinates or a polar (r, theta, phi) triple."""

    bloch: list[float] | None = None
    polar: tuple[float, float, float] | None = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.bloch is None) == (self.polar is None):
            raise ValueError("give exactly one of 'bloch' or 'polar'")
        return self


class EvalRequest(BaseModel):
    tester: TesterInput
    state: StateInput
    loss: str = "hs"


class RateReportModel(BaseModel):
    fisher: list[list[float]]
    hesse: list[list[float]]
    g_matrix: list[list[float]]
    sigma1: float
    trace_g: float
    error_rate_bound: float
    risk_rate: float


class EvalResponse(BaseModel):
    dim: int
    loss: str
    state: list[float]
    informationally_complete: bool
    rank: int
    report: RateReportModel


class SweepRequest(BaseModel):
    tester: TesterInput
    radius: float
    loss: str = "hs"
    n_theta: int = Field(default=25, ge=1)
    n_phi: int = Field(default=24, ge=1)


class SweepRowModel(BaseModel):
    theta: float
    phi: float
    tr_g: float
    sigma1_g: float


class SweepResponse(BaseModel):
    radius: float
    loss: str
    rows: list[SweepRowModel]
    csv: str


class SimulateRequest(BaseModel):
    tester: TesterInput
    state: StateInput
    loss: str = "hs"
    eps_sq: float
    n_values: list[int]
    repetitions: int
    seed: int
    estimator: str = "mle"


class DecayPointModel(BaseModel):
    n: int
    exceed_count: int
    reps: int
    p_hat: float
    wilson_low: float
    wilson_high: float
    censored: bool


class RiskPointModel(BaseModel):
    n: int
    mean_loss: float
    n_times_mean: float
    ratio: float


class SimulateResponse(BaseModel):
    config: dict
    estimator: str
    sigma1: float
    trace_g: float
    theory_slope: float
    slope: float | None
    slope_stderr: float | None
    ratio: float | None
    fit_message: str
    unphysical_total: int
    censored_n: list[int]
    theory_risk_rate: float
    decay: list[DecayPointModel]
    risk: list[RiskPointModel]
    decay_csv: str
    risk_csv: str


class OracleRequest(BaseModel):
    tester: TesterInput
    state: StateInput
    loss: str = "hs"
    eps_sq_list: list[float]
    n_directions: int = Field(default=10_000, ge=10)
    seed: int = 0


class OracleRowModel(BaseModel):
    eps_sq: float
    rate: float
    ratio: float


class OracleResponse(BaseModel):
    loss: str
    sigma1: float
    reference_rate: float
    rows: list[OracleRowModel]
    csv: str


class ValidateTesterResponse(BaseModel):
    dim: int
    n_outcomes: int
    informationally_complete: bool
    rank: int


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    category: str
    invariant: str | None = None
    detail: str


class ErrorResponse(BaseModel):
    error: ErrorBody
