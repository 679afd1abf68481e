from hrs.commands.data import register_data_commands
from hrs.commands.experiment import register_experiment_commands
from hrs.commands.figures import register_figure_commands
from hrs.commands.schedule import register_schedule_commands
