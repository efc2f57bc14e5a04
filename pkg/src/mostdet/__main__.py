import sys

from mostdet.cli import main

sys.exit(main())
