import sys

from flattenquant.main import main

sys.exit(main())
