import csv
import logging
from typing import IO, List, Optional

logger = logging.getLogger(__name__)

__all__ = ["IterationRecord", "ConvergenceTrace", "format_number"]

def format_number(value: Optional[float]) -> str:
    """
    The fixed numeric format of every CSV this package writes: 6 significant
    digits, empty for missing values.
    """

    if value is None:
        return ""
    return f"{value:.6g}"

class IterationRecord:
    """
    What a solver knows about itself after one (outer) iteration.

    - objective - value of the problem's objective (augmented Lagrangian for
      TV, the penalized data term for the refinements)
    - misfit - ||A u - b||_2
    - rel_change - | ||u^k|| - ||u^k+1|| | / ||u^k||, the stopping quantity
    - step_change - ||u^k+1 - u^k|| / ||u^k||, logged for diagnostics
    - psnr, mse - quality against the ground truth, if one was given
    - stage_psnr - quality of the local-transform stage of a two-stage
      refinement, if one was run against a ground truth
    """

    def __init__(self,
            iteration: int,
            objective: float,
            misfit: float,
            rel_change: float,
            step_change: float = 0.0,
            psnr: Optional[float] = None,
            mse: Optional[float] = None,
            stage_psnr: Optional[float] = None,
            ) -> None:
        self.iteration = iteration
        self.objective = objective
        self.misfit = misfit
        self.rel_change = rel_change
        self.step_change = step_change
        self.psnr = psnr
        self.mse = mse
        self.stage_psnr = stage_psnr

    def __repr__(self) -> str:
        return (f"IterationRecord({self.iteration}, objective={self.objective:.6g},"
                f" misfit={self.misfit:.6g}, rel_change={self.rel_change:.3g})")

class ConvergenceTrace:
    CSV_HEADER = ["iteration", "objective", "misfit", "rel_change", "psnr"]

    def __init__(self, solver: str) -> None:
        self._solver = solver
        self._records: List[IterationRecord] = []
        self.converged = False
        self.diverged = False
        self.inner_iterations = 0
        # Trace of the solve that produced this one's starting point
        self.initial_stage: Optional["ConvergenceTrace"] = None

    # Attributes

    @property
    def solver(self) -> str:
        return self._solver

    @property
    def records(self) -> List[IterationRecord]:
        return list(self._records)

    @property
    def iterations(self) -> int:
        return len(self._records)

    @property
    def total_iterations(self) -> int:
        """
        Iterations including those of the initial stage, if any.
        """

        total = len(self._records)
        if self.initial_stage is not None:
            total += self.initial_stage.total_iterations
        return total

    @property
    def first(self) -> Optional[IterationRecord]:
        return self._records[0] if self._records else None

    @property
    def last(self) -> Optional[IterationRecord]:
        return self._records[-1] if self._records else None

    def append(self, record: IterationRecord) -> None:
        if self._records and record.iteration <= self._records[-1].iteration:
            raise ValueError("iteration records must be appended in order")
        self._records.append(record)

    def extend(self, other: "ConvergenceTrace") -> None:
        """
        Append all records of another trace, renumbering them so the
        iteration index keeps increasing.
        """

        offset = self._records[-1].iteration if self._records else 0
        for record in other._records:
            self._records.append(IterationRecord(
                    offset + record.iteration, record.objective, record.misfit,
                    record.rel_change, record.step_change, record.psnr,
                    record.mse, record.stage_psnr))

    # Export

    def write_csv(self, f: IO[str]) -> None:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        for record in self._records:
            writer.writerow([
                    str(record.iteration),
                    format_number(record.objective),
                    format_number(record.misfit),
                    format_number(record.rel_change),
                    format_number(record.psnr),
            ])

    def save_csv(self, path: str) -> None:
        logger.info(f"Writing {self._solver} trace to {path!r}")
        with open(path, "w", newline="") as f:
            self.write_csv(f)
