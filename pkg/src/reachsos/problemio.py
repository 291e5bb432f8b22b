"""Problem-file parsing and serialization (JSON with polynomial strings)."""

from __future__ import annotations

import hashlib
import json
from importlib import resources

from .poly import Polynomial, PolynomialParseError, PolyVector, parse_polynomial
from .semialg import BasicOpenSet, ProblemInstance, SafeSet

SCHEMA_VERSION = 1


class ProblemFileError(ValueError):
    pass


def instance_from_dict(data: dict) -> ProblemInstance:
    try:
        version = data["schema_version"]
        if version != SCHEMA_VERSION:
            raise ProblemFileError(f"unsupported schema version {version}")
        n = int(data["dimension"])
        dynamics = [parse_polynomial(s, n) for s in data["dynamics"]]
        safe = SafeSet(parse_polynomial(data["safe"]["h"], n))
        initial = BasicOpenSet([parse_polynomial(s, n)
                                for s in data["initial"]["constraints"]])
        target = BasicOpenSet([parse_polynomial(s, n)
                               for s in data["target"]["constraints"]])
        box = [(float(lo), float(hi)) for lo, hi in data["bounding_box"]]
        return ProblemInstance(n, PolyVector(dynamics), safe, initial, target,
                               tuple(box), name=data.get("name", ""))
    except ProblemFileError:
        raise
    except PolynomialParseError as exc:
        raise ProblemFileError(f"malformed polynomial: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError(f"malformed problem file: {exc}") from exc


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": instance.name,
        "dimension": instance.dimension,
        "dynamics": [p.to_string() for p in instance.f],
        "safe": {"h": instance.safe.h.to_string()},
        "initial": {"constraints": [p.to_string() for p in instance.initial.constraints]},
        "target": {"constraints": [p.to_string() for p in instance.target.constraints]},
        "bounding_box": [[lo, hi] for lo, hi in instance.bounding_box],
    }


def load_problem(path: str) -> ProblemInstance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFileError(f"invalid JSON: {exc}") from exc
    return instance_from_dict(data)


def save_problem(instance: ProblemInstance, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2)
        fh.write("\n")


def instance_digest(instance: ProblemInstance) -> str:
    canon = json.dumps(instance_to_dict(instance), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_bundled_problem(name: str) -> ProblemInstance:
    """Load one of the packaged benchmark fixtures by name."""
    ref = resources.files("reachsos").joinpath(f"problems/{name}.json")
    if not ref.is_file():
        raise ProblemFileError(f"unknown bundled problem {name!r}")
    return instance_from_dict(json.loads(ref.read_text()))


def bundled_problem_names() -> list[str]:
    root = resources.files("reachsos").joinpath("problems")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
