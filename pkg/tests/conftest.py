from pathlib import Path

import pytest
from loguru import logger

from tclose_bridge.config import load_schema
from tclose_bridge.dataset import load_dataset
from tclose_bridge.models import AttributeKind, AttributeRole, AttributeSchema, Microdata

FIXTURES = Path(__file__).parent.parent / "fixtures"


@pytest.fixture(autouse=True)
def silence_logger():
    """Library code only logs; tests that care about output configure their own sink."""
    logger.remove()
    yield
    logger.remove()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def bands_schema():
    return load_schema(FIXTURES / "bands.schema")


@pytest.fixture
def bands(bands_schema):
    """Twelve records, three QI classes of four, salary bucketized into B1/B2/B3."""
    return load_dataset(FIXTURES / "bands.csv", bands_schema)


@pytest.fixture
def make_table():
    """Build a small table from columns; ``columns`` maps name -> (role, kind, values, extras)."""

    def _make(columns: dict) -> Microdata:
        schema = []
        values = []
        for name, spec in columns.items():
            role, kind, cells = spec[:3]
            extras = spec[3] if len(spec) > 3 else {}
            schema.append(AttributeSchema(name=name, role=AttributeRole(role), kind=AttributeKind(kind), **extras))
            values.append([float(v) if kind == "numeric" else v for v in cells])
        return Microdata(schema=tuple(schema), records=tuple(zip(*values)))

    return _make
