"""Per-step trajectory records and their CSV interchange format."""

from dataclasses import dataclass

import numpy as np

from .env import TERMINATION_KINDS, Termination
from .errors import ParseError

TRAJECTORY_HEADER = "step,t,x,y,z,vx,vy,vz,wx,wy,wz,ax,ay,az,reward,term"


@dataclass
class TrajectoryRecord:
    """State at one timestep plus the command and reward attached to it.

    `action` is the command issued from this state (zeros on the final row);
    `reward` is the total received on arriving at this state (0 on the first).
    """

    step: int
    t: float
    position: np.ndarray
    velocity: np.ndarray
    angular_velocity: np.ndarray
    action: np.ndarray
    reward: float
    term: str


def _validate(records):
    for i, r in enumerate(records):
        if i == 0 and r.step != 0:
            raise ValueError("trajectory must start at step 0")
        if i > 0 and r.step <= records[i - 1].step:
            raise ValueError(f"step indices must increase strictly (row {i})")
        is_last = i == len(records) - 1
        if is_last and r.term == Termination.RUNNING.value:
            raise ValueError("final record must carry a terminal kind")
        if not is_last and r.term != Termination.RUNNING.value:
            raise ValueError(f"non-final record {i} carries a terminal kind")


def write_trajectory(records, path):
    """Write records as CSV; floats use repr so values round-trip exactly."""
    if records:
        _validate(records)
    with open(path, "w") as f:
        f.write(TRAJECTORY_HEADER + "\n")
        for r in records:
            vals = [repr(float(v)) for v in
                    (r.t, *r.position, *r.velocity, *r.angular_velocity,
                     *r.action, r.reward)]
            f.write(f"{r.step}," + ",".join(vals) + f",{r.term}\n")


def read_trajectory(path):
    records = []
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != TRAJECTORY_HEADER:
            raise ParseError(f"bad trajectory header: {header!r}", line=1)
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 16:
                raise ParseError(f"expected 16 fields, got {len(parts)}", line=lineno)
            try:
                step = int(parts[0])
                nums = [float(p) for p in parts[1:15]]
            except ValueError as e:
                raise ParseError(str(e), line=lineno)
            term = parts[15]
            if term not in TERMINATION_KINDS:
                raise ParseError(f"unknown termination kind {term!r}", line=lineno)
            records.append(TrajectoryRecord(
                step=step, t=nums[0],
                position=np.array(nums[1:4]),
                velocity=np.array(nums[4:7]),
                angular_velocity=np.array(nums[7:10]),
                action=np.array(nums[10:13]),
                reward=nums[13], term=term))
    return records
