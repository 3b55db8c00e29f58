import json
import logging
import os
from typing import Optional

from pydantic import ValidationError

from core.exceptions import DataValidationError, MeasureNotFoundError
from core.models import MEASURE_ADAPTER, BetaMeasure, MeasureSpec

logger = logging.getLogger(__name__)


class MeasureRepositoryInterface:

    def load_measure(self, reference: str) -> MeasureSpec:
        # Resolve a shorthand, a JSON object or an @file reference into a measure
        pass

    def default_b(self, measure: MeasureSpec) -> Optional[float]:
        # The b that is implied by the measure itself, if any
        pass


class ShorthandMeasureRepository(MeasureRepositoryInterface):
    """Measures from CLI strings.

    Accepted forms: ``beta:a,b``, ``lebesgue:c``, ``atom:u,mass``,
    ``@path/to/measure.json`` and an inline JSON object.
    """

    def load_measure(self, reference: str) -> MeasureSpec:
        reference = reference.strip()
        if not reference:
            raise DataValidationError("Empty measure reference.")
        if reference.startswith("@"):
            return self._parse_json(self._read_file(reference[1:]), reference)
        if reference.startswith("{"):
            return self._parse_json(reference, "inline JSON")
        return self._parse_shorthand(reference)

    def default_b(self, measure: MeasureSpec) -> Optional[float]:
        # Beta(1,b) has b = lim density at 0
        if isinstance(measure, BetaMeasure) and measure.a == 1.0:
            return measure.b
        return None

    @staticmethod
    def _read_file(path: str) -> str:
        if not os.path.isfile(path):
            raise MeasureNotFoundError(f"Measure file '{path}' does not exist.")
        with open(path, encoding="utf-8") as handle:
            return handle.read()

    @staticmethod
    def _parse_json(text: str, origin: str) -> MeasureSpec:
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"Malformed measure JSON in {origin}: {e.msg}") from e
        try:
            return MEASURE_ADAPTER.validate_python(payload)
        except ValidationError as e:
            raise DataValidationError(str(e)) from e

    @staticmethod
    def _parse_shorthand(reference: str) -> MeasureSpec:
        kind, _, rest = reference.partition(":")
        try:
            values = [float(token) for token in rest.split(",")] if rest else []
        except ValueError as e:
            raise DataValidationError(f"Non-numeric parameter in measure '{reference}'.") from e
        logger.debug("measure shorthand kind=%s values=%s", kind, values)
        try:
            if kind == "beta" and len(values) == 2:
                return BetaMeasure(a=values[0], b=values[1])
            if kind == "lebesgue" and len(values) <= 1:
                return MEASURE_ADAPTER.validate_python({"kind": "lebesgue", "c": values[0] if values else 1.0})
            if kind == "atom" and len(values) == 2:
                return MEASURE_ADAPTER.validate_python({"kind": "atom", "location": values[0], "mass": values[1]})
        except ValidationError as e:
            raise DataValidationError(str(e)) from e
        raise DataValidationError(f"Unknown measure shorthand '{reference}'.")
