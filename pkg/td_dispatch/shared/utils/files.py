import json
import logging
from pathlib import Path
from typing import Any, Type, TypeVar

from pydantic import BaseModel, ValidationError

from td_dispatch.core.exceptions import InstanceValidationError

logger = logging.getLogger(__name__)

M = TypeVar('M', bound=BaseModel)


def _location(error: dict) -> str:
    return '.'.join(str(part) for part in error['loc']) or '<root>'


def parse_json(text: str, model: Type[M], source: str = '<text>') -> M:
    """
    Validate JSON text against a file schema

    Args:
        text (str): Raw JSON
        model (Type[M]): Pydantic schema of the file
        source (str): Name used in diagnostics

    Returns:
        M: The validated document

    Raises:
        InstanceValidationError: On a syntax error (with its line) or a
            schema violation (with the field path)
    """
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        if first['type'] == 'json_invalid':
            try:
                json.loads(text)
            except json.JSONDecodeError as syntax:
                raise InstanceValidationError(
                    f'{source}: line {syntax.lineno}: {syntax.msg}'
                ) from e
        details = '; '.join(f'{_location(err)}: {err["msg"]}' for err in e.errors())
        raise InstanceValidationError(f'{source}: {details}') from e


def read_json(path: Path, model: Type[M]) -> M:
    path = Path(path)
    if not path.exists():
        raise InstanceValidationError(f'{path}: file not found')
    logger.debug(f'Reading {path}')
    return parse_json(path.read_text(encoding='utf-8'), model, str(path))


def dump_json(data: Any) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline."""
    if isinstance(data, BaseModel):
        data = data.model_dump(mode='json', exclude_none=True)
    return json.dumps(data, indent=2, sort_keys=True) + '\n'


def write_json(path: Path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(data), encoding='utf-8')
    logger.debug(f'Wrote {path}')
    return path
