from __future__ import annotations


class QSDCError(Exception):
    """Базовая ошибка симулятора."""


class DimensionError(QSDCError, ValueError):
    """Несовпадение длин битовых векторов или ширины регистра."""


class ResourceError(QSDCError):
    """Превышен лимит ресурсов (кубиты плотного бэкенда, перебор CIP)."""


class CircuitError(QSDCError, ValueError):
    """Некорректный кубит, регистр или пара control/target."""


class PhaseError(QSDCError):
    """Нарушен порядок фаз протокола."""


class ConfigError(QSDCError, ValueError):
    """Недопустимая конфигурация прогона или атаки."""


class InvariantViolation(QSDCError):
    """Сработал внутренний инвариант (норма, табло, детерминизм декодирования)."""
