import sys

from pcmdp.cli import main

sys.exit(main())
