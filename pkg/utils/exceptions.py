class LghError(Exception):
    """Barcha lgh xatolari uchun asos"""
    exit_code = 1


# ============ INPUT ERRORS (exit 2) ============

class InputError(LghError):
    """Kiruvchi ma'lumot yoki parametr noto'g'ri"""
    exit_code = 2


class AlignmentError(InputError):
    """Sub'ekt ID lari mos kelmaydi"""


class RankDeficientError(InputError):
    """Dizayn matritsasi to'liq rangli emas"""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


# ============ NUMERICAL ERRORS (exit 3) ============

class NumericalError(LghError):
    """Hisoblashdagi jiddiy xato"""
    exit_code = 3


class NotPositiveDefiniteError(NumericalError):
    """Matritsa musbat aniqlangan emas"""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegenerateSystemError(NumericalError):
    """Kvadratik masalaning yechimi topilmadi"""
