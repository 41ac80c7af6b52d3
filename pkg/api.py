#!/usr/bin/env python3
"""REST API for paradifferential lab runs."""

import logging
from contextlib import asynccontextmanager
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException

# Load environment variables
load_dotenv()

from src.pipeline import LabPipeline
from src.models import Command, Report, RunConfig
from src.config import settings
from src.verify_service import SUITES

# Setup logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper()),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


# Global pipeline instance
pipeline = None


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifespan context manager for FastAPI."""
    global pipeline
    logger.info("Starting paradifferential lab API...")
    pipeline = LabPipeline()
    yield
    logger.info("Shutting down paradifferential lab API...")


app = FastAPI(
    title="Paradifferential Lab API",
    description="Type 1,1 pseudodifferential operators on the torus: norms, applications, probes and verification",
    version="1.0.0",
    lifespan=lifespan
)


@app.get("/")
async def root():
    """Root endpoint with API information."""
    return {
        "name": "Paradifferential Lab API",
        "version": "1.0.0",
        "status": "operational",
        "endpoints": {
            "norm": "/api/v1/norm",
            "apply": "/api/v1/apply",
            "verify": "/api/v1/verify",
            "counterexample": "/api/v1/counterexample",
            "probe": "/api/v1/probe",
            "reports": "/api/v1/reports/{run_id}",
            "health": "/health"
        }
    }


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {
        "status": "healthy",
        "threads": settings.threads,
        "output_dir": settings.output_dir,
        "suites": list(SUITES)
    }


def _run(command: Command, config: RunConfig) -> Report:
    """Run ``config`` as ``command`` and map failures to HTTP statuses."""
    config = config.model_copy(update={"command": command})
    logger.info(f"Received {command.value} request")

    try:
        return pipeline.run(config)

    except TimeoutError as e:
        logger.error(f"Run timeout: {e}")
        raise HTTPException(status_code=504, detail=str(e))
    except ValueError as e:
        logger.error(f"Invalid request: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Run failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"Internal server error: {str(e)}")


@app.post("/api/v1/norm", response_model=Report)
def measure_norm(config: RunConfig):
    """Norm of the configured input in ``config.space``."""
    return _run(Command.NORM, config)


@app.post("/api/v1/apply", response_model=Report)
def apply_symbol(config: RunConfig):
    """
    Apply ``config.symbol`` to the configured input through the three series.

    Set ``oracle`` to compare against direct quadrature.
    """
    return _run(Command.APPLY, config)


@app.post("/api/v1/verify", response_model=Report)
def verify(config: RunConfig):
    """
    Run a verification suite.

    Note: the full suite is a synchronous operation that may take several minutes.
    """
    return _run(Command.VERIFY, config)


@app.post("/api/v1/counterexample", response_model=Report)
def counterexample(config: RunConfig):
    """Identity, pairing, norms and growth table of the theta_N family."""
    return _run(Command.COUNTEREXAMPLE, config)


@app.post("/api/v1/probe", response_model=Report)
def probe(config: RunConfig):
    """Boundedness or Marschall probe, selected by ``config.probe``."""
    return _run(Command.PROBE, config)


@app.get("/api/v1/reports/{run_id}", response_model=Report)
async def get_report(run_id: str):
    """Previously stored report."""
    report = pipeline.storage_service.load_report(run_id)
    if report is None:
        raise HTTPException(status_code=404, detail=f"No report for run {run_id}")
    return report


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "api:app",
        host=settings.api_host,
        port=settings.api_port,
        reload=False,
        log_level=settings.log_level.lower()
    )
