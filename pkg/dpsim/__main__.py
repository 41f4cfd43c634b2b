import sys

from dpsim.cli import DpSimCLI


def main():
    cli = DpSimCLI()
    sys.exit(cli.run(sys.argv[1:]))


if __name__ == "__main__":
    main()
