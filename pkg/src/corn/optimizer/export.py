"""Writers for the two interchange formats external MILP solvers accept."""

from __future__ import annotations

from ..errors import ConfigError
from .model import IlpModel

_SENSE_LP = {"<=": "<=", ">=": ">=", "=": "="}
_SENSE_MPS = {"<=": "L", ">=": "G", "=": "E"}

FORMATS = ("lp-text", "mps-text")


def _num(x: float) -> str:
    return repr(float(x))


def _lp_terms(coeffs: dict[str, float]) -> str:
    parts: list[str] = []
    for var, coef in coeffs.items():
        if coef < 0:
            parts.append(f"- {_num(-coef)} {var}")
        elif parts:
            parts.append(f"+ {_num(coef)} {var}")
        else:
            parts.append(f"{_num(coef)} {var}")
    return " ".join(parts)


def write_lp(model: IlpModel) -> str:
    lines = ["\\ bubble partition model", "Minimize"]
    if model.objective:
        lines.append(f" obj: {_lp_terms(model.objective)}")
    else:
        lines.append(f" obj: 0 {model.variables[0]}")
    lines.append("Subject To")
    for row in model.constraints:
        lines.append(f" {row.name}: {_lp_terms(row.coeffs)} {_SENSE_LP[row.sense]} {_num(row.rhs)}")
    lines.append("Binary")
    for var in model.variables:
        lines.append(f" {var}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_mps(model: IlpModel) -> str:
    lines = ["NAME bubble_partition", "ROWS", " N obj"]
    for row in model.constraints:
        lines.append(f" {_SENSE_MPS[row.sense]} {row.name}")
    by_var: dict[str, list[tuple[str, float]]] = {v: [] for v in model.variables}
    for var, coef in model.objective.items():
        by_var[var].append(("obj", coef))
    for row in model.constraints:
        for var, coef in row.coeffs.items():
            by_var[var].append((row.name, coef))
    lines.append("COLUMNS")
    lines.append(" M1 'MARKER' 'INTORG'")
    for var in model.variables:
        for row_name, coef in by_var[var]:
            lines.append(f" {var} {row_name} {_num(coef)}")
    lines.append(" M2 'MARKER' 'INTEND'")
    lines.append("RHS")
    for row in model.constraints:
        if row.rhs != 0.0:
            lines.append(f" RHS {row.name} {_num(row.rhs)}")
    lines.append("BOUNDS")
    for var in model.variables:
        lines.append(f" BV BND {var}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def export_model(model: IlpModel, format: str) -> str:
    if format == "lp-text":
        return write_lp(model)
    if format == "mps-text":
        return write_mps(model)
    raise ConfigError(f"unknown export format {format!r}; expected one of {FORMATS}")
