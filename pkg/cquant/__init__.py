"""
Пакет cquant: квантование вероятностных мер с ограничением на замкнутое множество.
"""

__version__ = "0.1.0"
