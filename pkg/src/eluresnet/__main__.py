import sys

from eluresnet.cli import main

sys.exit(main())
