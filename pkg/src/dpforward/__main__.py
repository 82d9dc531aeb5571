import sys

from dpforward.cli import main

sys.exit(main())
