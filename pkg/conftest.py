import sys
from pathlib import Path

# run the suite against the in-tree sources without requiring an install
sys.path.insert(0, str(Path(__file__).parent / "src"))
