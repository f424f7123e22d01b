import sys

from icmpstamp.cli import main

sys.exit(main())
