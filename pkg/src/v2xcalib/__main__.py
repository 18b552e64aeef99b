import sys

from v2xcalib.cli import main

sys.exit(main())
