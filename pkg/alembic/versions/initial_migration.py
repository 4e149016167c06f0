"""Initial migration

Revision ID: 3f9c2a71d0b4
Revises:
Create Date: 2026-10-18 00:00:00.000000

"""
from alembic import op
import sqlalchemy as sa

# revision identifiers, used by Alembic.
revision = '3f9c2a71d0b4'
down_revision = None
branch_labels = None
depends_on = None


def upgrade():
    # Create simulation_runs table
    op.create_table(
        'simulation_runs',
        sa.Column('id', sa.String(), nullable=False),
        sa.Column('kind', sa.String(), nullable=False),
        sa.Column('master_seed', sa.String(), nullable=False),
        sa.Column('config', sa.JSON(), nullable=False),
        sa.Column('session_count', sa.Integer(), nullable=False),
        sa.Column('validation_rate', sa.Float(), nullable=False),
        sa.Column('created_at', sa.DateTime(timezone=True), server_default=sa.func.now(), nullable=True),
        sa.PrimaryKeyConstraint('id')
    )

    # Create session_results table
    op.create_table(
        'session_results',
        sa.Column('id', sa.Integer(), autoincrement=True, nullable=False),
        sa.Column('run_id', sa.String(), nullable=False),
        sa.Column('position', sa.Integer(), nullable=False),
        sa.Column('seed', sa.String(), nullable=False),
        sa.Column('n', sa.Integer(), nullable=False),
        sa.Column('s', sa.Integer(), nullable=False),
        sa.Column('r', sa.Integer(), nullable=False),
        sa.Column('m', sa.Integer(), nullable=False),
        sa.Column('qber', sa.Float(), nullable=True),
        sa.Column('validated', sa.Boolean(), nullable=False),
        sa.Column('fault', sa.Boolean(), nullable=False),
        sa.Column('pad_consumed', sa.Integer(), nullable=False),
        sa.Column('net_gain', sa.Integer(), nullable=False),
        sa.Column('keys_equal', sa.Boolean(), nullable=False),
        sa.ForeignKeyConstraint(['run_id'], ['simulation_runs.id'], ondelete='CASCADE'),
        sa.PrimaryKeyConstraint('id')
    )

    # Add indexes
    op.create_index(op.f('ix_simulation_runs_created_at'), 'simulation_runs', ['created_at'], unique=False)
    op.create_index(op.f('ix_session_results_run_id'), 'session_results', ['run_id'], unique=False)


def downgrade():
    # Drop indexes
    op.drop_index(op.f('ix_session_results_run_id'), table_name='session_results')
    op.drop_index(op.f('ix_simulation_runs_created_at'), table_name='simulation_runs')

    # Drop tables
    op.drop_table('session_results')
    op.drop_table('simulation_runs')
