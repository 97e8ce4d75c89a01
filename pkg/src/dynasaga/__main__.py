import sys

from dynasaga.cli import main

sys.exit(main())
