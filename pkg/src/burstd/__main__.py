import sys

from burstd.cli import main

sys.exit(main())
