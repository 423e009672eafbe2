import sys

from chainforge.cli import main

sys.exit(main())
