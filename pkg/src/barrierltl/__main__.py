import sys

from barrierltl.cli import main

sys.exit(main())
