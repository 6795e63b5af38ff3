import math
import re
from typing import Iterable, List, Tuple

from td_dispatch.core.exceptions import LPFormatError
from td_dispatch.features.milp.data import (
    LinearConstraint,
    MilpModel,
    Sense,
    Variable,
)

TERMS_PER_LINE = 6
_SECTIONS = ('minimize', 'subject to', 'bounds', 'binaries', 'end')
_TERM = re.compile(r'([+-])\s*(\S+)\s+([A-Za-z_][A-Za-z0-9_.]*)')
_CONSTANTS = re.compile(r'^\\\s*(t_max|q_max|sigma)\s*=\s*(\S+)$')


def _number(value: float) -> str:
    if math.isinf(value):
        return '+inf' if value > 0 else '-inf'
    return repr(float(value))


def _terms(terms: Iterable[Tuple[str, float]]) -> List[str]:
    pieces = [
        f'{"-" if coef < 0 else "+"} {_number(abs(coef))} {var}' for var, coef in terms
    ]
    return [
        ' '.join(pieces[k : k + TERMS_PER_LINE])
        for k in range(0, len(pieces), TERMS_PER_LINE)
    ]


def _row(constraint: LinearConstraint) -> List[str]:
    chunks = _terms(constraint.terms) or ['+ 0.0 __constant']
    chunks[-1] += f' {constraint.sense.value} {_number(constraint.rhs)}'
    return [f' {constraint.name}: {chunks[0]}'] + [f'   {chunk}' for chunk in chunks[1:]]


def write_cuts(cuts: Iterable[LinearConstraint]) -> str:
    """Constraint rows, one statement each, ready to append under `Subject To`."""
    return ''.join(line + '\n' for cut in cuts for line in _row(cut))


def write_lp(model: MilpModel) -> str:
    """
    Serialise a model as LP-format text

    Terms are wrapped onto continuation lines; the big-M constants and the
    request profit travel along as comments.
    """
    lines = [
        '\\ relaxed pickup-and-delivery model',
        f'\\ t_max = {_number(model.t_max)}',
        f'\\ q_max = {_number(model.q_max)}',
        f'\\ sigma = {_number(model.sigma)}',
        'Minimize',
    ]
    objective = _terms(model.objective.items()) or ['+ 0.0 __constant']
    lines.append(f' obj: {objective[0]}')
    lines.extend(f'   {chunk}' for chunk in objective[1:])

    lines.append('Subject To')
    for constraint in model.constraints:
        lines.extend(_row(constraint))

    lines.append('Bounds')
    for variable in model.variables.values():
        if variable.binary:
            continue
        if variable.lower == variable.upper:
            lines.append(f' {variable.name} = {_number(variable.lower)}')
        else:
            lines.append(
                f' {_number(variable.lower)} <= {variable.name} <= {_number(variable.upper)}'
            )

    lines.append('Binaries')
    binaries = model.binaries
    for k in range(0, len(binaries), TERMS_PER_LINE * 2):
        lines.append(' ' + ' '.join(binaries[k : k + TERMS_PER_LINE * 2]))
    lines.append('End')
    return '\n'.join(lines) + '\n'


def _parse_terms(text: str, where: str) -> List[Tuple[str, float]]:
    text = text.strip()
    if text and text[0] not in '+-':
        text = '+ ' + text
    terms = []
    position = 0
    for match in _TERM.finditer(text):
        if text[position : match.start()].strip():
            raise LPFormatError(f'{where}: cannot parse {text[position:match.start()]!r}')
        sign, coef, var = match.groups()
        try:
            value = float(coef)
        except ValueError as e:
            raise LPFormatError(f'{where}: bad coefficient {coef!r}') from e
        if var != '__constant':
            terms.append((var, -value if sign == '-' else value))
        position = match.end()
    if text[position:].strip():
        raise LPFormatError(f'{where}: trailing text {text[position:]!r}')
    return terms


def _statements(lines: List[str]) -> List[str]:
    statements: List[str] = []
    for line in lines:
        if ':' in line or not statements:
            statements.append(line.strip())
        else:
            statements[-1] += ' ' + line.strip()
    return statements


def _constraints(lines: List[str]) -> List[LinearConstraint]:
    constraints = []
    for statement in _statements(lines):
        name, _, body = statement.partition(':')
        match = re.match(r'^(.*?)(<=|>=|=)\s*(\S+)$', body.strip())
        if match is None:
            raise LPFormatError(f'constraint {name.strip()}: missing sense or right-hand side')
        terms = _parse_terms(match.group(1), f'constraint {name.strip()}')
        constraints.append(
            LinearConstraint(
                name.strip(), tuple(terms), Sense(match.group(2)), float(match.group(3))
            )
        )
    return constraints


def read_cuts(text: str) -> List[LinearConstraint]:
    """
    Parse rows written by `write_cuts`

    Raises:
        LPFormatError: On malformed rows
    """
    return _constraints([line for line in text.splitlines() if line.strip()])


def read_lp(text: str) -> MilpModel:
    """
    Parse LP text produced by `write_lp` back into a model

    Raises:
        LPFormatError: On unknown sections, malformed rows or bounds
    """
    model = MilpModel()
    sections = {name: [] for name in _SECTIONS}
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip():
            continue
        constant = _CONSTANTS.match(line.strip())
        if constant:
            setattr(model, constant.group(1), float(constant.group(2)))
            continue
        if line.startswith('\\'):
            continue
        if line.strip().lower() in _SECTIONS:
            current = line.strip().lower()
            continue
        if current is None:
            raise LPFormatError(f'line {number}: content before the first section')
        sections[current].append(line)

    for statement in _statements(sections['minimize']):
        _, _, body = statement.partition(':')
        model.objective = dict(_parse_terms(body, 'objective'))

    declared = {}
    model.constraints.extend(_constraints(sections['subject to']))
    for constraint in model.constraints:
        for var, _ in constraint.terms:
            declared.setdefault(var, None)
    for var in model.objective:
        declared.setdefault(var, None)

    bounds = {}
    for line in sections['bounds']:
        parts = line.split()
        if len(parts) == 3 and parts[1] == '=':
            bounds[parts[0]] = (float(parts[2]), float(parts[2]))
        elif len(parts) == 5 and parts[1] == parts[3] == '<=':
            bounds[parts[2]] = (float(parts[0]), float(parts[4]))
        else:
            raise LPFormatError(f'bad bound line {line.strip()!r}')
    binaries = [name for line in sections['binaries'] for name in line.split()]

    for name in [*bounds, *binaries, *declared]:
        if name in model.variables:
            continue
        if name in binaries:
            model.variables[name] = Variable(name, 0.0, 1.0, binary=True)
        else:
            lower, upper = bounds.get(name, (0.0, math.inf))
            model.variables[name] = Variable(name, lower, upper)
    return model
