# lut_retouch/__main__.py
from .main import entry_point

if __name__ == "__main__":
    entry_point()
