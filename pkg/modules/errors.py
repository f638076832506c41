"""ChainBound 的异常层级与命令行退出码。"""

# 退出码（保持稳定，脚本依赖这些数值）
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CERTIFICATE = 3
EXIT_INADMISSIBLE = 4
EXIT_DEGENERATE = 5
EXIT_QUADRATURE = 6
EXIT_IO = 7


class ChainBoundError(Exception):
    """所有 ChainBound 异常的基类"""


class DomainError(ChainBoundError, ValueError):
    """参数超出函数定义域（半径 ≤ 0、负常数、λ ≥ 1 等）"""


class DegenerateAnnulusError(DomainError):
    """原点处的提议环退化"""


class ConfigError(ChainBoundError):
    """实验配置无效，按用法错误处理"""


class QuadratureError(ChainBoundError):
    """
    自适应积分未收敛。

    Attributes:
        best_estimate: 放弃时的最佳积分估计。
        error_estimate: 对应的误差估计。
    """

    def __init__(self, message: str, best_estimate: float = float("nan"), error_estimate: float = float("inf")):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate


class CertificateViolation(ChainBoundError):
    """
    数值审计未通过。

    Attributes:
        location: 出问题的位置（半径或常数名）。
        observed: 观测到的数值。
    """

    def __init__(self, message: str, location=None, observed: float | None = None):
        super().__init__(message)
        self.location = location
        self.observed = observed


class ReplayMismatch(CertificateViolation):
    """重放得到的输出摘要与清单记录不一致"""


class InadmissibleParameter(ChainBoundError, ValueError):
    """shift-coupling 参数 r 不满足 λ^{1-n0 r} A^r < 1"""


class DegenerateDiagnostic(ChainBoundError):
    """链内方差 W = 0，PSRF 无定义"""


def exit_code_for(exc: BaseException) -> int:
    """
    把异常映射到命令行退出码。

    Args:
        exc: 捕获到的异常。

    Returns:
        int: 对应的退出码；其余异常按用法错误处理。
    """
    # InadmissibleParameter 也是 ValueError，必须先于 DomainError 判断
    if isinstance(exc, InadmissibleParameter):
        return EXIT_INADMISSIBLE
    if isinstance(exc, CertificateViolation):
        return EXIT_CERTIFICATE
    if isinstance(exc, DegenerateDiagnostic):
        return EXIT_DEGENERATE
    if isinstance(exc, QuadratureError):
        return EXIT_QUADRATURE
    if isinstance(exc, (ConfigError, DomainError)):
        return EXIT_USAGE
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_USAGE
