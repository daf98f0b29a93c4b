"""kegnnflow 的异常层级。

命令行入口按异常类型映射退出码：配置错误 1，数据错误 2，数值发散 3。
"""

from typing import Optional


class KegnnError(Exception):
    """所有 kegnnflow 异常的基类。"""

    exit_code = 1


class ConfigError(KegnnError, ValueError):
    exit_code = 1


class DataError(KegnnError, ValueError):
    exit_code = 2


class IngestionError(DataError):
    """数据集读取失败，携带出错的文件与行号。"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class ClauseSyntaxError(DataError):
    """子句文件语法错误，携带行列位置（均从 1 开始）。"""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"第 {line} 行第 {column} 列: {message}")


class DivergenceError(KegnnError, ArithmeticError):
    exit_code = 3


class DimensionError(KegnnError, ValueError):
    pass


class ContractError(KegnnError, ValueError):
    pass


class DomainError(KegnnError, ValueError):
    pass


class GroundingError(KegnnError, ValueError):
    pass


class ScatterIndexError(KegnnError, IndexError):
    pass
