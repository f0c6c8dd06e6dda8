#
# This file is part of the ecgifoe package.
#

import logging


##################################
#    Events                      #
##################################


class Events:
    """
    Class that represents the events that can be observed.
    """

    SOLVER_ITERATION_EVENT = "SOLVER_ITERATION_EVENT"
    """
    Used to notify a finished iteration of an iterative solver. (arg: dict with iteration, objective, tau, restart)
    """
    SOLVER_RESTART_EVENT = "SOLVER_RESTART_EVENT"
    """
    Used to notify that the momentum of the accelerated solver was reset. (arg: iteration)
    """
    SOLVER_FINISHED_EVENT = "SOLVER_FINISHED_EVENT"
    """
    Used to notify that a solver stopped. (arg: dict with iterations, converged)
    """
    TRAINING_STEP_EVENT = "TRAINING_STEP_EVENT"
    """
    Used to notify a finished training step. (arg: dict with step, loss, best_loss)
    """
    SAMPLE_GENERATED_EVENT = "SAMPLE_GENERATED_EVENT"
    """
    Used to notify that a dataset sample was written. (arg: seed)
    """
    BENCH_TASK_EVENT = "BENCH_TASK_EVENT"
    """
    Used to notify that a benchmark unit of work finished. (arg: description)
    """


##################################
#    Generic Observable class    #
##################################


class Observable:
    """
    Class that implements the **Observable** at the observer pattern.

    Args:
        observers: Observers registered from the start, notified in order.
    """

    def __init__(self, *observers):
        self.__observers = []
        for observer in observers:
            self.add_observer(observer)

    def add_observer(self, observer):
        if not isinstance(observer, Observer):
            raise TypeError("{} is not an Observer".format(type(observer).__name__))
        logging.debug("[OBSERVABLE] {} observes {}".format(type(observer).__name__, type(self).__name__))
        self.__observers.append(observer)

    def remove_observer(self, observer):
        self.__observers.remove(observer)

    def get_observers(self):
        return list(self.__observers)

    def notify(self, event, obj):
        """
        Notifies an event to all the observers.

        Args:
            event: One of the ``Events`` names.
            obj: The payload documented with the event.
        """
        for o in self.__observers:
            o.update(event, obj)


##################################
#    Generic Observer class      #
##################################


class Observer:
    """
    Receives ``(event, obj)`` from an Observable; events it does not handle are ignored.
    """

    def update(self, event, obj):
        pass
