import io
from typing import Optional

import logfire
import numpy as np
import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, PositiveFloat, PositiveInt, ValidationError

from ibfgs import experiment
from ibfgs.baseline import run_subgradient
from ibfgs.data import densify, max_index, parse_sparse_file
from ibfgs.errors import IBFGSError
from ibfgs.models import (
    SUBGRADIENT, BaselineConfig, Dataset, ObjectiveConfig, ProfileTable, SmoothingFlavor, SolverConfig, StepPolicy,
    Variant,
)
from ibfgs.solver import solve_tsvm

load_dotenv()
logfire.configure(send_to_logfire='if-token-present')

app = FastAPI()

origins = [
    "http://localhost:5173",
    "http://127.0.0.1:5173",
    "*",
]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class SolveRequest(BaseModel):
    samples: str = Field(description='Sample lines in the sparse format; lines without a label are unlabeled.')
    variant: str = Variant.SMOOTH.value
    C1: PositiveFloat = 1.0
    C2: PositiveFloat = 0.1
    beta: PositiveFloat = 1.0
    smoothing_flavor: SmoothingFlavor = SmoothingFlavor.PIECEWISE
    max_iters: PositiveInt = 1000
    seed: int = 0
    step_policy: Optional[str] = None


class SolveResponse(BaseModel):
    w: list[float]
    b: float
    objective: float
    training_error: float
    iterations: int
    skipped: int


class ProfileRequest(BaseModel):
    values: dict[str, dict[str, float]]


def _dataset(text: str) -> Dataset:
    samples = parse_sparse_file(io.StringIO(text))
    labeled = [s for s in samples if s.label is not None]
    if not labeled:
        raise ValueError('at least one labeled sample is required')
    unlabeled = [s for s in samples if s.label is None]
    features, labels = densify(labeled + unlabeled, max(max_index(samples), 1))
    return Dataset(features=features, labels=labels[:len(labeled)])


@app.post("/api/solve", response_model=SolveResponse)
def solve(request: SolveRequest):
    try:
        data = _dataset(request.samples)
        obj_cfg = ObjectiveConfig(C1=request.C1, C2=request.C2, beta=request.beta,
                                  smoothing_flavor=request.smoothing_flavor)
        if request.variant == SUBGRADIENT:
            trace = run_subgradient(data, obj_cfg, BaselineConfig(max_iters=request.max_iters, seed=request.seed))
        else:
            policy = StepPolicy.parse(request.step_policy) if request.step_policy else None
            cfg = SolverConfig(variant=Variant(request.variant), max_iters=request.max_iters, seed=request.seed,
                               step_policy=policy)
            trace = solve_tsvm(data, cfg, obj_cfg)
    except (IBFGSError, ValueError, ValidationError) as e:
        logfire.warn("rejected solve request: {error}", error=str(e), variant=request.variant)
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logfire.error("solve failed: {error}", error=str(e), variant=request.variant)
        raise HTTPException(status_code=500, detail=str(e))

    p = data.p
    return SolveResponse(
        w=trace.final.w, b=trace.final.b, objective=trace.final_objective,
        training_error=experiment.test_error(trace.final, data.features[:p], np.asarray(data.labels)),
        iterations=len(trace.records), skipped=trace.skipped_updates)


@app.post("/api/profile", response_model=ProfileTable)
def profile(request: ProfileRequest):
    try:
        return experiment.performance_profile(request.values)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=8000)
