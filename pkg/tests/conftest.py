import pytest
import tempfile
import shutil
from pathlib import Path
import numpy as np
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool
from fastapi.testclient import TestClient

from app.database.models import Base
from app.main import app
from app.database.connection import get_db
from app.models.schemas import RunConfig
from app.services import bounds, gf2

# Honest-session test point: d_K = 85, s = 222, feasible_m_max = 51
HONEST_POINT = {"m": 8, "epsilon": 0.1, "tau": 0.2, "tau_s": 0.1, "r": 200}


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    # Clean up after test
    shutil.rmtree(temp_dir)


@pytest.fixture
def rng():
    """Seeded generator so statistical tests are reproducible."""
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def honest_params():
    return bounds.derive_params(**HONEST_POINT)


@pytest.fixture(scope="session")
def honest_matrix(honest_params):
    """Verified 8 x 200 matrix with minimum combination weight >= d_K."""
    return gf2.generate_pa_matrix(
        honest_params.m, honest_params.r, honest_params.d_k, np.random.default_rng(7)
    )


@pytest.fixture
def small_matrix():
    """3 x 6 matrix of full rank with minimum combination weight 3."""
    return gf2.as_bitmatrix(["110100", "011010", "101001"])


@pytest.fixture
def honest_run_config():
    """Three ideal-source sessions at the honest test point."""
    return RunConfig(**HONEST_POINT, sessions=3, seed=11, matrix_seed=7)


@pytest.fixture
def honest_config_file(temp_dir):
    """Flat run configuration for an ideal source at the honest test point."""
    path = Path(temp_dir) / "run.conf"
    path.write_text(
        "# ideal source, no eavesdropper\n"
        "m = 8\n"
        "epsilon = 0.1\n"
        "tau = 0.2\n"
        "tau_s = 0.1\n"
        "r = 200\n"
        "source = ideal\n"
        "sessions = 3\n"
        "seed = 11\n"
        "matrix_seed = 7\n"
    )
    return str(path)


@pytest.fixture
def db_engine():
    """Create a test database engine."""
    # One shared in-memory connection, usable from the TestClient thread
    engine = create_engine(
        "sqlite:///:memory:",
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    Base.metadata.create_all(engine)
    yield engine
    Base.metadata.drop_all(engine)


@pytest.fixture
def db_session(db_engine):
    """Create a test database session."""
    TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=db_engine)

    db = TestingSessionLocal()

    try:
        yield db
    finally:
        db.close()


@pytest.fixture
def test_client(db_session):
    """Create a test client for the FastAPI app."""

    # Override the dependency with our test session
    def override_get_db():
        try:
            yield db_session
        finally:
            pass

    app.dependency_overrides[get_db] = override_get_db

    with TestClient(app) as client:
        yield client

    # Remove dependency override
    app.dependency_overrides = {}
