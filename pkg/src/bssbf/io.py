"""Profile files: JSON with exact float round-trip."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scenario import AngleGrid, SpatialProfile

FORMAT_TAG = "bssbf-profile/1"


def profile_to_dict(profile: SpatialProfile, grid: AngleGrid) -> dict:
    users = []
    for k in range(profile.num_users):
        beams = np.flatnonzero(profile.power[k] > 0)
        rec = {"user": k, "beams": beams.tolist(), "power": profile.power[k, beams].tolist()}
        if profile.offsets is not None:
            rec["offsets"] = profile.offsets[beams].tolist()
        users.append(rec)
    return {"format": FORMAT_TAG, "grid_sines": grid.sines.tolist(), "users": users}


def profile_from_dict(doc: dict) -> tuple[SpatialProfile, AngleGrid]:
    if doc.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported profile format {doc.get('format')!r}, expected {FORMAT_TAG!r}")
    grid = AngleGrid(np.array(doc["grid_sines"], dtype=float))
    users = sorted(doc["users"], key=lambda u: u["user"])
    if [u["user"] for u in users] != list(range(len(users))):
        raise ValueError("user ids must be 0..K-1")
    power = np.zeros((len(users), len(grid)))
    offsets = None
    for u in users:
        beams = np.asarray(u["beams"], dtype=int)
        vals = np.asarray(u["power"], dtype=float)
        if beams.shape != vals.shape:
            raise ValueError(f"user {u['user']}: beams and power lengths differ")
        power[u["user"], beams] = vals
        if "offsets" in u:
            if offsets is None:
                offsets = np.full(len(grid), np.nan)
            for l, d in zip(beams, u["offsets"]):
                if not np.isnan(offsets[l]) and offsets[l] != d:
                    raise ValueError(f"conflicting offsets for grid point {l}")
                offsets[l] = d
    if offsets is not None:
        offsets = np.nan_to_num(offsets, nan=0.0)
    return SpatialProfile(power, offsets=offsets), grid


def save_profile(path, profile: SpatialProfile, grid: AngleGrid) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(profile, grid), indent=1))


def load_profile(path) -> tuple[SpatialProfile, AngleGrid]:
    return profile_from_dict(json.loads(Path(path).read_text()))
