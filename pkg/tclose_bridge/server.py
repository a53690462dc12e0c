import json
import sys
from pathlib import Path

from loguru import logger
from mcp.server.fastmcp import FastMCP

from .closeness import check_t_closeness
from .config import get_config, load_schema
from .dataset import load_dataset
from .dpbridge import dp_to_t_bound
from .dpbridge import t_to_eps as t_to_eps_certificate
from .exceptions import TCloseError
from .models import jsonable

mcp = FastMCP("tclose-bridge")

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} - {message}"


def _json(payload: dict) -> str:
    return json.dumps(jsonable(payload), indent=2, ensure_ascii=False)


@mcp.tool()
async def dp_to_t(n: int, class_sizes: list[int], epsilon: float, statement_coefficient: bool = False) -> str:
    """t-closeness level guaranteed by k-anonymous classes of the given sizes plus ε-DP Laplace noise.

    Args:
        n: Number of records
        class_sizes: Size of every equivalence class, summing to n
        epsilon: Privacy level of the noise on the confidential attributes
        statement_coefficient: Use (N-|E|-1)/|E| instead of (N-|E|)/|E|
    """
    try:
        coefficient = "statement" if statement_coefficient else "proof"
        return _json(dp_to_t_bound(n, class_sizes, epsilon, coefficient).to_dict())
    except ValueError as e:
        return f"Invalid bound request: {str(e)}"


@mcp.tool()
async def t_to_eps(t: float) -> str:
    """ε-differential privacy level implied by exp(ε/2)-closeness, i.e. ε = 2 ln t."""
    try:
        return _json(t_to_eps_certificate(t).to_dict())
    except ValueError as e:
        return f"Invalid bound request: {str(e)}"


@mcp.tool()
async def check_closeness(csv_path: str, schema_path: str, t: float, conf_columns: list[str] | None = None) -> str:
    """Check t-closeness of a CSV table described by a schema sidecar.

    Args:
        csv_path: CSV file with a header row
        schema_path: Schema sidecar (column.role=..., column.kind=...)
        t: Closeness level, any real ≥ 1
        conf_columns: Confidential columns taken jointly (default: all)
    """
    try:
        data = load_dataset(Path(csv_path), load_schema(Path(schema_path)))
        conf = conf_columns or [attr.name for attr in data.confidential]
        return _json(check_t_closeness(data, conf, t).to_dict())
    except TCloseError as e:
        return f"Invalid table: {str(e)}"
    except OSError as e:
        logger.error(f"Cannot read {csv_path}: {e}")
        return f"Error reading files: {str(e)}"


def main():
    try:
        level = get_config().log_level
    except (TCloseError, OSError):
        level = "WARNING"
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=level)
    logger.info("Running tclose-bridge tool server...")
    mcp.run(transport="stdio")


if __name__ == "__main__":
    main()
