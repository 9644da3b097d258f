"""Group-wise GREAT scores from a remote endpoint."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import InvalidInput
from ..score import GlobalEstimate, great_score_mean, local_great_score
from .client import EndpointClient, EndpointConfig, ItemError


@dataclass(frozen=True)
class AuditSample:
    id: str
    label: int
    input: tuple


@dataclass(frozen=True)
class AuditGroup:
    name: str
    samples: tuple

    def __post_init__(self):
        if not self.samples:
            raise InvalidInput(f"group {self.name!r} is empty")
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise InvalidInput(f"group {self.name!r} has duplicate sample ids")

    @classmethod
    def from_dict(cls, data: dict) -> "AuditGroup":
        try:
            samples = tuple(AuditSample(str(s["id"]), int(s["label"]), tuple(float(v) for v in s["input"]))
                            for s in data["samples"])
            return cls(str(data["name"]), samples)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed audit group: {exc}") from exc


@dataclass(frozen=True)
class GroupResult:
    name: str
    estimate: Optional[GlobalEstimate]  # None when every sample failed
    samples: int
    failures: int

    @property
    def valid(self) -> bool:
        return self.estimate is not None


@dataclass(frozen=True)
class GroupReport:
    groups: tuple
    overall: Optional[GlobalEstimate]

    def to_dict(self) -> dict:
        return {
            "groups": [{"name": g.name, "valid": g.valid, "samples": g.samples, "failures": g.failures,
                        "estimate": None if g.estimate is None else g.estimate.to_dict()} for g in self.groups],
            "overall": None if self.overall is None else self.overall.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroupReport":
        groups = tuple(GroupResult(g["name"], None if g["estimate"] is None else GlobalEstimate.from_dict(g["estimate"]),
                                   int(g["samples"]), int(g["failures"])) for g in data["groups"])
        overall = data.get("overall")
        return cls(groups, None if overall is None else GlobalEstimate.from_dict(overall))


def audit_groups(endpoint: EndpointConfig, groups: Sequence[AuditGroup], client: Optional[EndpointClient] = None,
                 **client_kwargs) -> GroupReport:
    """Score every group and the union of groups.

    Failed samples are left out of the means and counted per group.
    """
    if not groups:
        raise InvalidInput("no audit groups given")
    client = client or EndpointClient(endpoint, **client_kwargs)
    batch = [{"id": s.id, "input": list(s.input)} for g in groups for s in g.samples]
    results = client.query(batch)
    out, all_scores, pos = [], [], 0
    for g in groups:
        scores, failures = [], 0
        for s in g.samples:
            r = results[pos]
            pos += 1
            if isinstance(r, ItemError):
                failures += 1
                continue
            if not 0 <= s.label < len(r):
                raise InvalidInput(f"sample {s.id!r} label {s.label} out of range for {len(r)} classes")
            scores.append(local_great_score(r, s.label))
        all_scores.extend(scores)
        out.append(GroupResult(g.name, great_score_mean(scores) if scores else None, len(g.samples), failures))
    return GroupReport(tuple(out), great_score_mean(all_scores) if all_scores else None)
