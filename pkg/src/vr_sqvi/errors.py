class SqviError(Exception):
    exit_code = 3


class ConfigError(SqviError, ValueError):
    exit_code = 2

    def __init__(
        self,
        message: str,
        *,
        field: str | None = None,
        line: int | None = None,
        column: int | None = None,
    ):
        self.field = field
        self.line = line
        self.column = column
        parts = [message]
        if field:
            parts.append(f"field={field}")
        if line is not None:
            parts.append(f"line={line} column={column}")
        super().__init__(" | ".join(parts))


class BoundOrderError(ConfigError):
    pass


class InfeasibleConditionError(ConfigError):
    pass


class DomainError(SqviError, ValueError):
    pass


class ScheduleOverflowError(SqviError, OverflowError):
    pass


class DimensionTooLargeError(SqviError, ValueError):
    pass


class ProjectionError(SqviError):
    pass


class InfeasibleSetError(SqviError):
    exit_code = 4

    def __init__(self, message: str, *, blocks: list[int] | None = None):
        self.blocks = list(blocks or [])
        super().__init__(message)


class BoundViolationError(SqviError):
    pass
