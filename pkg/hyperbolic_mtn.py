import sys
from src import CLI

def print_help():
    print("Usage: python hyperbolic_mtn.py <subcommand> [--config run.json] [--out folder] [--seed n] [--threads n] [--no-svg]")
    print("Subcommands: tile, contract, disorder, mqa-fit, spectrum, fidelity-sweep, parent-fit, excite")
    print("Example: python hyperbolic_mtn.py contract --config run.json --out results/contract")

if __name__ == "__main__":
    # Check if the user asked for help or gave no subcommand
    if len(sys.argv) < 2 or sys.argv[1] in ['-h', '--help']:
        print_help()
    else:
        status = CLI.run(sys.argv[1:])
        if status:
            print(f"Run failed with exit status {status}; see run.log in the output folder.")
        sys.exit(status)
