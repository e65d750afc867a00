import os
import sys

# lab modules import `config` and `born_infeld` from the repo root
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
