# -*- coding: utf-8 -*-
"""
异常体系
路径: src/utils/errors.py
功能: 所有业务异常都带 exit_code，CLI 据此返回退出码 (0 成功 / 2 校验 / 3 数值 / 1 其它)
"""

from typing import Iterable, Optional


class OdeRiskError(Exception):
    exit_code = 1


class ValidationError(OdeRiskError):
    exit_code = 2


class ParseError(ValidationError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(ValidationError):
    pass


class ContractError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class NumericalError(OdeRiskError):
    exit_code = 3

    def __init__(self, message: str, where=None):
        self.where = where
        if where is not None:
            message = f"{message} (at {where})"
        super().__init__(message)


class DivergenceError(NumericalError):
    pass


class DegenerateWeightError(NumericalError):
    def __init__(self, message: str, subject_ids: Iterable = ()):
        self.subject_ids = list(subject_ids)
        super().__init__(f"{message}; subjects: {self.subject_ids}")
