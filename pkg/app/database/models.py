from sqlalchemy import JSON, Boolean, Column, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func
import uuid

from app.database.connection import Base


def generate_uuid():
    """Generate a UUID string."""
    return str(uuid.uuid4())


class SimulationRun(Base):
    """A batch of sessions run from one configuration."""
    __tablename__ = "simulation_runs"

    id = Column(String, primary_key=True, default=generate_uuid)
    kind = Column(String, nullable=False, default="run")
    master_seed = Column(String, nullable=False)  # unsigned 64-bit, stored as text
    config = Column(JSON, nullable=False)
    session_count = Column(Integer, nullable=False, default=0)
    validation_rate = Column(Float, nullable=False, default=0.0)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    # Relationships
    sessions = relationship(
        "SessionResult", back_populates="run", cascade="all, delete-orphan", order_by="SessionResult.position"
    )

    def __repr__(self):
        return f"<SimulationRun(id='{self.id}', sessions={self.session_count})>"


class SessionResult(Base):
    """One session row of a stored run, mirroring the CSV columns."""
    __tablename__ = "session_results"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String, ForeignKey("simulation_runs.id", ondelete="CASCADE"), nullable=False)
    position = Column(Integer, nullable=False)
    seed = Column(String, nullable=False)
    n = Column(Integer, nullable=False)
    s = Column(Integer, nullable=False)
    r = Column(Integer, nullable=False)
    m = Column(Integer, nullable=False)
    qber = Column(Float, nullable=True)
    validated = Column(Boolean, nullable=False)
    fault = Column(Boolean, nullable=False, default=False)
    pad_consumed = Column(Integer, nullable=False)
    net_gain = Column(Integer, nullable=False)
    keys_equal = Column(Boolean, nullable=False)

    # Relationships
    run = relationship("SimulationRun", back_populates="sessions")
