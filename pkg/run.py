import sys

from btw.main import main

if __name__ == "__main__":
    sys.exit(main())
