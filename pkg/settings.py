from dotenv import load_dotenv
import os

load_dotenv()

LOG_LEVEL = os.getenv("SEMRB_LOG_LEVEL", "INFO")

# Caps element-parallel assembly and parameter-parallel sweeps
THREADS = int(os.getenv("SEMRB_THREADS", "1"))

OUTPUT_DIR = os.getenv("SEMRB_OUTPUT_DIR", "./output")
SNAPSHOTS_PATH = os.getenv("SEMRB_SNAPSHOTS_PATH", os.path.join(OUTPUT_DIR, "snapshots.semrb"))
ROM_PATH = os.getenv("SEMRB_ROM_PATH", os.path.join(OUTPUT_DIR, "rom.semrb"))
REPORT_PATH = os.getenv("SEMRB_REPORT_PATH", os.path.join(OUTPUT_DIR, "report.csv"))

# Field export sampling grid, "NXxNY"
EXPORT_GRID = os.getenv("SEMRB_GRID", "361x61")

# Global dof count published for the reference channel setup
REFERENCE_GLOBAL_DOFS = 14259
REFERENCE_LOCAL_BOUNDARY_DOFS = 3072
