import argparse
import os
import sys

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))  # Parent directory where is the ecgifoe module
import ecgifoe
from ecgifoe.controller import Controller

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'config', 'desk.conf')

argparser = argparse.ArgumentParser(description='ECG imaging with finite elements and Fields-of-Experts priors', add_help=False)

argparser.add_argument('-c', '--config', dest='config', default=DEFAULT_CONFIG,
                       help='Configuration file (key = value lines or JSON) (default: app/config/desk.conf)')
argparser.add_argument('-s', '--seed', dest='seed', type=int, default=0,
                       help='Seed of meshes, noise and training (default: 0)')
argparser.add_argument('-o', '--out', dest='out', default=None,
                       help='Output file or directory of the command')
argparser.add_argument('-t', '--threads', dest='threads', type=int, default=None,
                       help='Worker threads (default: $ECGIFOE_THREADS or 1)')
argparser.add_argument('-e', '--env', dest='env', default=os.path.join(os.path.dirname(os.path.abspath(__file__)), '.env'),
                       help='.env file path')
argparser.add_argument('-V', '--verbose', dest='verbose', action='store_true', default=False,
                       help='Debug logging and environment report')
argparser.add_argument('-v', '--version', action='version',
                       version='%(prog)s ' + ecgifoe.__version__, help="Show version")
argparser.add_argument('-h', '--help', action='help', default=argparse.SUPPRESS,
                       help='Show help')

commands = argparser.add_subparsers(dest='command', required=True, metavar='command')
commands.add_parser('mesh', help='Build the torso mesh and electrodes')
commands.add_parser('datagen', help='Generate the synthetic dataset')
for name, text in (('denoise', 'Run the denoising benchmark'), ('inverse', 'Run the inverse-problem benchmark'), ('train', 'Train the MFoE model with SPSA')):
    sub = commands.add_parser(name, help=text)
    sub.add_argument('--dataset', dest='dataset', default=None, help='Dataset directory (default: datagen.dataset)')
evaluate = commands.add_parser('eval', help='L2 error between two field files')
evaluate.add_argument('field', help='Field file (STF1)')
evaluate.add_argument('reference', help='Reference field file (STF1)')
evaluate.add_argument('--mesh', dest='mesh', default=None, help='Mesh file (default: <dataset>/mesh.txt)')
commands.add_parser('refine-study', help='Energy refinement study')
plot = commands.add_parser('plot', help='Space-time plot of a field file')
plot.add_argument('field', help='Field file (STF1)')

'''
Code for running the controller
'''
if __name__ == '__main__':
    args = argparser.parse_args()
    sys.exit(Controller(args).start())
