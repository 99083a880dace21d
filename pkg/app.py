#!/usr/bin/env python3
"""
Файл запуска из корневого каталога без установки пакета.
Передает аргументы командной строки в cquant.
"""
import os
import sys

# Добавляем корень проекта в путь поиска модулей
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cquant.cli import main

if __name__ == "__main__":
    main()
