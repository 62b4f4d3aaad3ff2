"""
Simulation service for closed-loop KSE runs
"""

import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydField

from models.errors import PreconditionError
from models.field import Field
from models.schemas import ControlRecord, MonitorRow, MonitorSeries, SimConfig
from utils.field_ops import dump_field_csv
from utils.kse_stepper import KseStepper, SimState, energy_norm_sq, initial_field
from utils.logger import get_logger

logger = get_logger(__name__)

MONITOR_HEADER = "t,V,V1,c0,lap_sq,blowup"


class SimulationResult(BaseModel):
    """Monitor series, snapshots and control log of one run"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: SimConfig
    series: MonitorSeries
    snapshots: Dict[float, Field] = PydField(default_factory=dict)
    control_log: List[ControlRecord] = PydField(default_factory=list)
    final: Field
    steps: int
    attraction_margin: Optional[float] = None
    files: List[Path] = PydField(default_factory=list)

    @property
    def blowup(self) -> bool:
        return self.series.blowup


def snapshot_name(t: float) -> str:
    return f"snapshot_t{t:g}.csv"


def write_monitor_csv(series: MonitorSeries, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.array([[r.t, r.V, r.V1, r.c0, r.lap_sq, int(r.blowup)] for r in series.rows]).reshape(-1, 6)
    np.savetxt(path, data, delimiter=",", header=MONITOR_HEADER, comments="",
               fmt=["%.17g"] * 5 + ["%d"])
    return path


def write_control_csv(records: List[ControlRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.array([[c.t, c.j, c.u] for c in records]).reshape(-1, 3)
    np.savetxt(path, data, delimiter=",", header="t,j,u", comments="", fmt=["%.17g", "%d", "%.17g"])
    return path


class SimulationService:
    """Service for closed-loop simulations"""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir) if output_dir is not None else None

    def run(self, config: SimConfig, z0: Optional[Field] = None) -> SimulationResult:
        """
        Integrate the closed loop to config.horizon.

        Sampled mode refreshes the held control every h; continuous mode every step.
        Writes monitor.csv, control.csv and the snapshot files when an output
        directory is set.
        """
        started = time.time()
        stepper = KseStepper(config)
        z0 = initial_field(config) if z0 is None else z0
        state = stepper.initial_state(z0)

        margin = None
        if config.c_bound is not None:
            margin = config.c_bound ** 2 - energy_norm_sq(z0, config.p1, config.p2)
            where = "inside" if margin > 0 else "outside"
            logger.info(f"Initial state is {where} the certified region: C^2 - ||z0||_V^2 = {margin:.6g}")

        n_steps = config.n_steps
        snapshot_steps = {}
        for ts in config.snapshot_times:
            k = int(round(ts / config.dt))
            if k > n_steps:
                logger.warning(f"Snapshot time {ts:g} is beyond the horizon {config.horizon:g}; skipped")
                continue
            snapshot_steps[k] = ts

        logger.info(
            f"Simulation start: m={config.m}, dt={config.dt:g}, T={config.horizon:g}, "
            f"{config.control_mode}/{config.meas_mode}, "
            f"h={config.h if config.control_mode == 'sampled' else 'n/a'}, {n_steps} steps"
        )

        rows: List[MonitorRow] = []
        snapshots: Dict[float, Field] = {}
        controls: List[ControlRecord] = []
        self._record(stepper, state, rows, snapshots, controls, snapshot_steps, force=True)
        while state.step_index < n_steps:
            state = stepper.step(state)
            if state.blowup:
                rows.append(stepper.monitors(state))
                break
            self._record(stepper, state, rows, snapshots, controls, snapshot_steps,
                         force=state.step_index == n_steps)

        series = MonitorSeries(rows=rows)
        logger.info(
            f"Simulation end: t={state.t:g} after {state.step_index} steps, "
            f"blowup={state.blowup}, {time.time() - started:.1f}s"
        )
        result = SimulationResult(
            config=config, series=series, snapshots=snapshots, control_log=controls,
            final=state.z, steps=state.step_index, attraction_margin=margin,
        )
        if self.output_dir is not None:
            result.files = self.write(result, self.output_dir)
        return result

    def run_continuous(self, config: SimConfig, z0: Optional[Field] = None) -> SimulationResult:
        if config.control_mode != "continuous":
            raise PreconditionError("run_continuous needs control_mode=continuous")
        return self.run(config, z0)

    def _record(self, stepper: KseStepper, state: SimState, rows: List[MonitorRow],
                snapshots: Dict[float, Field], controls: List[ControlRecord],
                snapshot_steps: Dict[int, float], force: bool = False) -> None:
        cfg = stepper.config
        on_row = force or state.step_index % cfg.output_stride == 0
        if on_row:
            rows.append(stepper.monitors(state))
        if state.step_index in snapshot_steps:
            snapshots[snapshot_steps[state.step_index]] = state.z
        # continuous mode refreshes every step; its log is thinned to the monitor rows
        refresh = cfg.control_mode == "sampled" and state.step_index % cfg.steps_per_sample == 0
        if refresh or (cfg.control_mode == "continuous" and on_row):
            controls.extend(ControlRecord(t=state.t, j=j, u=float(u)) for j, u in enumerate(state.held_u))

    def write(self, result: SimulationResult, out_dir: Path) -> List[Path]:
        out_dir = Path(out_dir)
        files = [
            write_monitor_csv(result.series, out_dir / "monitor.csv"),
            write_control_csv(result.control_log, out_dir / "control.csv"),
        ]
        for t, f in sorted(result.snapshots.items()):
            files.append(dump_field_csv(f, out_dir / snapshot_name(t)))
        logger.info(f"Wrote {len(files)} files to {out_dir}")
        return files
