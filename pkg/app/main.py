from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse
from fastapi.middleware.cors import CORSMiddleware
import time
import logging

from app.config import settings
from app.controllers.bounds_controller import router as bounds_router
from app.controllers.matrix_controller import router as matrix_router
from app.controllers.run_controller import router as run_router
from app.database.connection import engine, Base
from app.exceptions import (
    ConfigurationError,
    MatrixSearchExhaustedError,
    PadExhaustedError,
    ParameterError,
    ProtocolFault,
    QKDError,
)

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper()),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

# Settings echoed at startup
STARTUP_SETTINGS = (
    "DEBUG", "API_PREFIX", "DATABASE_URL", "OUTPUT_DIR", "EXHAUSTIVE_WEIGHT_LIMIT",
    "MATRIX_ATTEMPT_BUDGET", "CASCADE_PASS_COUNT", "ESTIMATION_FRACTION", "SWEEP_WORKERS",
)

# First match wins, so subclasses come before their bases
ERROR_STATUS = (
    (ParameterError, status.HTTP_400_BAD_REQUEST),
    (ConfigurationError, status.HTTP_400_BAD_REQUEST),
    (MatrixSearchExhaustedError, status.HTTP_422_UNPROCESSABLE_ENTITY),
    (PadExhaustedError, status.HTTP_409_CONFLICT),
    (ProtocolFault, status.HTTP_409_CONFLICT),
)

# Initialize the database models
Base.metadata.create_all(bind=engine)

# Initialize the application directories
settings.initialize()

# Create FastAPI app
app = FastAPI(
    title=settings.APP_NAME,
    debug=settings.DEBUG,
    version="1.0.0",
    description="Security bounds, privacy-amplification matrices and simulated sessions of "
                "entanglement-based quantum key distribution."
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.on_event("startup")
async def startup_event():
    """Startup event handler."""
    logger.info(f"Starting {settings.APP_NAME}")
    for name in STARTUP_SETTINGS:
        logger.info(f"  {name}: {getattr(settings, name)}")


@app.exception_handler(QKDError)
async def qkd_error_handler(request: Request, exc: QKDError):
    """Map simulator errors that escape a controller onto an HTTP status."""
    code = next(
        (code for kind, code in ERROR_STATUS if isinstance(exc, kind)),
        status.HTTP_500_INTERNAL_SERVER_ERROR,
    )
    logger.error(f"{type(exc).__name__} on {request.url.path}: {exc}")
    return JSONResponse(status_code=code, content={"detail": str(exc)})


# Request logging middleware
@app.middleware("http")
async def add_process_time_header(request: Request, call_next):
    start_time = time.time()
    try:
        response = await call_next(request)
        process_time = time.time() - start_time
        response.headers["X-Process-Time"] = str(process_time)
        return response
    except Exception as e:
        logger.exception(f"Error processing request: {str(e)}")
        return JSONResponse(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            content={"detail": "Internal server error"}
        )


# Include routers
app.include_router(bounds_router, prefix=f"{settings.API_PREFIX}")
app.include_router(matrix_router, prefix=f"{settings.API_PREFIX}")
app.include_router(run_router, prefix=f"{settings.API_PREFIX}")


# Health check endpoint
@app.get("/health")
async def health_check():
    return {"status": "healthy"}


# Root endpoint
@app.get("/")
async def root():
    return {
        "message": f"Welcome to {settings.APP_NAME}",
        "documentation": "/docs"
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "app.main:app",
        host=settings.HOST,
        port=settings.PORT,
        reload=settings.DEBUG,
        log_level=settings.LOG_LEVEL
    )
